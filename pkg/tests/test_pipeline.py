import csv
import json
import os

import numpy as np
import pytest

from gridstyle.bilateral_grid import load_grid
from gridstyle.errors import (ConfigError, EmptyMask, LengthMismatch,
                              MissingFlow)
from gridstyle.frame_io import load_image
from gridstyle.losses import write_flo
from gridstyle.pipeline import (ArraySource, DirectorySource, PipelineConfig,
                                PipelineRunner, benchmark, evaluate_metrics,
                                run_pipeline)
from gridstyle.weight_io import seeded_pipeline_bundle

from conftest import disk_mask, panning_clip, smooth_noise, write_clip, write_style


def make_config(tmp_path, n_frames=4, size=48, static=False, **kwargs):
    tmp_path.mkdir(parents=True, exist_ok=True)
    if static:
        frame = smooth_noise((size, size, 3), 3).astype(np.float32)
        frames = [frame.copy() for _ in range(n_frames)]
    else:
        frames, _ = panning_clip(n_frames, size)
    masks = [disk_mask(size) for _ in range(n_frames)]
    cdir, mdir = write_clip(tmp_path, frames, masks)
    cfg = PipelineConfig(
        content_dir=cdir,
        mask_dir=mdir,
        style_fg_path=write_style(tmp_path, "fg.png", 21, size),
        style_bg_path=write_style(tmp_path, "bg.png", 22, size),
        out_dir=str(tmp_path / "out"),
        lowres_size=48,
        **kwargs)
    return cfg


@pytest.fixture(scope="module")
def shared_bundle():
    return seeded_pipeline_bundle(42)


class TestConfig:
    def test_validation_errors(self, tmp_path):
        base = dict(content_dir="c", mask_dir="m", style_fg_path="f",
                    style_bg_path="b", out_dir="o")
        with pytest.raises(ConfigError):
            PipelineConfig(grid_rate=0, **base).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(alpha=1.5, **base).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(lowres_size=40, **base).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(transition_schedule=[], **base).validate()
        with pytest.raises(ConfigError):
            PipelineConfig(transition_schedule=[(5, 0.0), (1, 1.0)],
                           **base).validate()
        PipelineConfig(**base).validate()

    def test_grid_dims(self, tmp_path):
        cfg = PipelineConfig(content_dir="c", mask_dir="m", style_fg_path="f",
                             style_bg_path="b", out_dir="o", lowres_size=256)
        assert cfg.grid_dims == (16, 16, 8)


class TestRunPipeline:
    def test_writes_all_frames(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=4)
        results = run_pipeline(cfg, weights=shared_bundle)
        assert len(results) == 4
        for res in results:
            assert os.path.exists(res.path)
            img = load_image(res.path)
            assert img.shape == (48, 48, 3)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_keyframe_schedule(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=7, grid_rate=3)
        results = run_pipeline(cfg, weights=shared_bundle)
        keys = [res.index for res in results if res.is_keyframe]
        assert keys == [0, 3, 6]

    def test_static_clip_rate_invariant(self, tmp_path, shared_bundle):
        cfg1 = make_config(tmp_path / "a", n_frames=6, static=True, grid_rate=1)
        cfg8 = make_config(tmp_path / "b", n_frames=6, static=True, grid_rate=4)
        r1 = run_pipeline(cfg1, weights=shared_bundle)
        r8 = run_pipeline(cfg8, weights=shared_bundle)
        for a, b in zip(r1, r8):
            np.testing.assert_allclose(load_image(a.path), load_image(b.path),
                                       atol=1e-6)

    def test_deterministic_across_runs(self, tmp_path, shared_bundle):
        cfg1 = make_config(tmp_path / "a", n_frames=3)
        cfg2 = make_config(tmp_path / "b", n_frames=3)
        r1 = run_pipeline(cfg1, weights=shared_bundle)
        r2 = run_pipeline(cfg2, weights=shared_bundle)
        for a, b in zip(r1, r2):
            np.testing.assert_array_equal(load_image(a.path), load_image(b.path))

    def test_mask_changes_output(self, tmp_path, shared_bundle):
        size, n = 48, 2
        frames, _ = panning_clip(n, size)
        small = [disk_mask(size, radius=6) for _ in range(n)]
        large = [disk_mask(size, radius=20) for _ in range(n)]
        cfg_a = make_config(tmp_path / "a", n_frames=n)
        cfg_b = make_config(tmp_path / "b", n_frames=n)
        (tmp_path / "sa").mkdir()
        (tmp_path / "sb").mkdir()
        cfg_a.content_dir, cfg_a.mask_dir = write_clip(tmp_path / "sa",
                                                       frames, small)
        cfg_b.content_dir, cfg_b.mask_dir = write_clip(tmp_path / "sb",
                                                       frames, large)
        cfg_a.keep_frames = cfg_b.keep_frames = True
        ra = run_pipeline(cfg_a, weights=shared_bundle)
        rb = run_pipeline(cfg_b, weights=shared_bundle)
        assert np.abs(ra[0].frame - rb[0].frame).max() > 0

    def test_empty_mask_reports_frame(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=2)
        from gridstyle.weight_io import WeightBundle
        dead = WeightBundle()
        for name in shared_bundle.names():
            arr = shared_bundle.get(name).copy()
            if name == "M3_b":
                arr -= 200.0  # sigmoid underflows to exactly zero
            dead.put(name, arr)
        with pytest.raises(EmptyMask, match="frame 0"):
            run_pipeline(cfg, weights=dead)

    def test_mismatched_clip_lengths(self, tmp_path):
        frames, _ = panning_clip(3, 48)
        masks = [disk_mask(48)] * 3
        cdir, mdir = write_clip(tmp_path, frames, masks)
        os.remove(os.path.join(mdir, sorted(os.listdir(mdir))[-1]))
        with pytest.raises(LengthMismatch):
            DirectorySource(cdir, mdir)

    def test_dump_grids(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=4, grid_rate=2, dump_grids=True)
        run_pipeline(cfg, weights=shared_bundle)
        gdir = os.path.join(cfg.out_dir, "grids")
        names = sorted(os.listdir(gdir))
        assert names == ["frame_000001.abgr", "frame_000003.abgr"]
        grid = load_grid(os.path.join(gdir, names[0]))
        assert grid.dims == (3, 3, 8)


class TestTransition:
    def test_zero_weight_matches_baseline(self, tmp_path, shared_bundle):
        base = make_config(tmp_path / "a", n_frames=3)
        trans = make_config(tmp_path / "b", n_frames=3,
                            transition_schedule=[(0, 0.0)])
        ra = run_pipeline(base, weights=shared_bundle)
        rb = run_pipeline(trans, weights=shared_bundle)
        for a, b in zip(ra, rb):
            np.testing.assert_array_equal(load_image(a.path), load_image(b.path))

    def test_full_weight_swaps_styles(self, tmp_path, shared_bundle):
        base = make_config(tmp_path / "a", n_frames=2, keep_frames=True)
        trans = make_config(tmp_path / "b", n_frames=2, keep_frames=True,
                            transition_schedule=[(0, 1.0)])
        ra = run_pipeline(base, weights=shared_bundle)
        rb = run_pipeline(trans, weights=shared_bundle)
        assert np.abs(ra[0].frame - rb[0].frame).max() > 0

    def test_schedule_interpolates(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=5,
                          transition_schedule=[(0, 0.0), (4, 1.0)])
        runner = PipelineRunner(cfg, weights=shared_bundle)
        assert runner._transition_weight(2) == pytest.approx(0.5)
        assert runner._transition_weight(10) == pytest.approx(1.0)


class TestBenchmark:
    def test_rows_and_csv(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=3)
        rows = benchmark(cfg, [32], frames_per_run=23)
        stages = {r["stage"] for r in rows if r["resolution"] == 32}
        assert "render" in stages and "total" in stages
        for r in rows:
            assert r["mean_ms"] >= 0.0 and r["n"] > 0
        csv_path = os.path.join(cfg.out_dir, "benchmark.csv")
        with open(csv_path) as fh:
            read = list(csv.DictReader(fh))
        assert len(read) == len(rows)

    def test_too_few_frames_rejected(self, tmp_path):
        cfg = make_config(tmp_path, n_frames=3)
        with pytest.raises(ConfigError):
            benchmark(cfg, [32], frames_per_run=5)


class TestMetrics:
    def test_report_contents(self, tmp_path, shared_bundle):
        n, size = 4, 48
        frames, flows = panning_clip(n, size)
        masks = [disk_mask(size)] * n
        cdir, mdir = write_clip(tmp_path, frames, masks)
        fdir = tmp_path / "flow"
        fdir.mkdir()
        for i, fl in enumerate(flows):
            write_flo(fl, str(fdir / f"frame_{i + 1:06d}.flo"))
        cfg = PipelineConfig(
            content_dir=cdir, mask_dir=mdir,
            style_fg_path=write_style(tmp_path, "fg.png", 21, size),
            style_bg_path=write_style(tmp_path, "bg.png", 22, size),
            out_dir=str(tmp_path / "out"), flow_dir=str(fdir),
            lowres_size=48)
        report = evaluate_metrics(cfg, weights=seeded_pipeline_bundle(42))
        for key in ("losses", "warping_error", "total", "frames", "keyframes"):
            assert key in report
        assert report["frames"] == n
        assert report["warping_error"] >= 0.0
        assert report["total"] >= 0.0
        with open(os.path.join(cfg.out_dir, "metrics.json")) as fh:
            on_disk = json.load(fh)
        assert on_disk["total"] == pytest.approx(report["total"])

    def test_requires_flow_dir(self, tmp_path, shared_bundle):
        cfg = make_config(tmp_path, n_frames=3)
        with pytest.raises(MissingFlow):
            evaluate_metrics(cfg, weights=shared_bundle)


class TestArraySource:
    def test_matches_directory_source(self, tmp_path, shared_bundle):
        n, size = 3, 48
        frames, _ = panning_clip(n, size)
        masks = [disk_mask(size)] * n
        cdir, mdir = write_clip(tmp_path, frames, masks)
        cfg = make_config(tmp_path / "cfgdir", n_frames=n)
        runner = PipelineRunner(cfg, weights=shared_bundle)
        dir_src = DirectorySource(cdir, mdir)
        quantized = [dir_src.frame(i) for i in range(n)]
        qmasks = [dir_src.mask(i) for i in range(n)]
        res_dir = runner.run_clip(dir_src)
        runner.reset_stream()
        res_arr = runner.run_clip(ArraySource(quantized, qmasks))
        assert len(res_dir) == len(res_arr) == n
