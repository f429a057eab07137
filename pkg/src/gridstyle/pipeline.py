"""End-to-end orchestration: the low-resolution grid prediction path, the
full-resolution guide/render path, temporal grid sub-sampling, style
transitions, benchmark timing, and metric evaluation.
"""

import csv
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import frame_io
from .bilateral_grid import (IDENTITY_AFFINE, AffineBilateralGrid,
                             blend_grids, grid_from_head, lerp_grids, render,
                             save_grid)
from .errors import (ConfigError, EmptyMask, LengthMismatch, MissingFlow,
                     MissingFrame)
from .guidance import guide_map
from .losses import (LossWeights, content_loss, guide_loss, mask_loss,
                     read_flo, style_loss, total_loss, visibility_mask,
                     warping_error)
from .bilateral_grid import laplacian_reg
from .mask_pipeline import Mask, enhance_mask, soft_grid_mask
from .tensor_core import conv2d, resize_bilinear
from .transfer import FixtureExtractor, fresh_states, splat_forward
from .weight_io import GRID_PATH, load as load_weights, seeded_pipeline_bundle

STAGES = ("downsample", "features", "mask_enhance", "guide",
          "grid_fg", "grid_bg", "grid_mask", "blend", "render")

GRID_DEPTH = 8


@dataclass
class PipelineConfig:
    content_dir: str
    mask_dir: str
    style_fg_path: str
    style_bg_path: str
    out_dir: str
    weights_path: Optional[str] = None
    flow_dir: Optional[str] = None
    grid_rate: int = 1
    alpha: float = 0.5
    lowres_size: int = 256
    transition_schedule: Optional[list] = None  # [(frame index, weight)]
    style_fg2_path: Optional[str] = None
    style_bg2_path: Optional[str] = None
    report_metrics: bool = False
    seed: int = 42
    dump_grids: bool = False
    keep_frames: bool = False
    keep_internals: bool = False

    def validate(self):
        if int(self.grid_rate) != self.grid_rate or self.grid_rate < 1:
            raise ConfigError(f"grid_rate must be an integer >= 1, got {self.grid_rate}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.lowres_size % 16 != 0 or self.lowres_size // 16 < 2:
            raise ConfigError(
                f"lowres_size must be a multiple of 16 and >= 32, got {self.lowres_size}")
        if self.transition_schedule is not None:
            if not self.transition_schedule:
                raise ConfigError("transition schedule is empty")
            frames = [f for f, _ in self.transition_schedule]
            if frames != sorted(frames):
                raise ConfigError("transition schedule frames must be ascending")
            for f, wgt in self.transition_schedule:
                if not 0.0 <= wgt <= 1.0:
                    raise ConfigError(
                        f"transition weight {wgt} at frame {f} outside [0, 1]")

    @property
    def grid_dims(self):
        s = self.lowres_size // 16
        return (s, s, GRID_DEPTH)


@dataclass
class FrameResult:
    index: int
    path: Optional[str] = None
    timings: dict = field(default_factory=dict)
    frame: Optional[np.ndarray] = None
    is_keyframe: bool = False
    fg_grid: object = None
    bg_grid: object = None
    grid_mask: object = None
    blended: object = None


@contextmanager
def _timed(timings, stage):
    start = time.perf_counter()
    yield
    timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - start) * 1e3


class ClipSource:
    """Abstract per-frame access; pipeline and benchmark share it."""

    def __len__(self):
        raise NotImplementedError

    def frame(self, i):
        raise NotImplementedError

    def mask(self, i):
        raise NotImplementedError


class DirectorySource(ClipSource):
    def __init__(self, content_dir, mask_dir):
        self.frame_paths = frame_io.list_frames(content_dir)
        self.mask_paths = frame_io.list_frames(mask_dir)
        if len(self.frame_paths) != len(self.mask_paths):
            raise LengthMismatch(
                f"{len(self.frame_paths)} frames but {len(self.mask_paths)} masks")

    def __len__(self):
        return len(self.frame_paths)

    def frame(self, i):
        return frame_io.load_image(self.frame_paths[i])

    def mask(self, i):
        return frame_io.load_mask(self.mask_paths[i])


class ArraySource(ClipSource):
    def __init__(self, frames, masks):
        if len(frames) != len(masks):
            raise LengthMismatch(f"{len(frames)} frames but {len(masks)} masks")
        self.frames = frames
        self.masks = masks

    def __len__(self):
        return len(self.frames)

    def frame(self, i):
        return self.frames[i]

    def mask(self, i):
        m = self.masks[i]
        return m if isinstance(m, Mask) else Mask(m)


class PipelineRunner:
    """Holds weights, style pyramids, and per-stream transfer states."""

    def __init__(self, config, weights=None):
        config.validate()
        self.cfg = config
        if weights is not None:
            self.weights = weights
        elif config.weights_path:
            self.weights = load_weights(config.weights_path)
        else:
            self.weights = seeded_pipeline_bundle(config.seed)
        self.extractor = FixtureExtractor(self.weights)
        self._prepare_styles()
        self.reset_stream()

    def _load_style(self, path):
        lr = resize_bilinear(frame_io.load_image(path),
                             self.cfg.lowres_size, self.cfg.lowres_size)
        return self.extractor.extract(lr)

    def _prepare_styles(self):
        self.style_fg = self._load_style(self.cfg.style_fg_path)
        self.style_bg = self._load_style(self.cfg.style_bg_path)
        self.transition = self.cfg.transition_schedule is not None
        if self.transition:
            # Default alternate styles: the swapped fg/bg pair.
            fg2 = self.cfg.style_fg2_path or self.cfg.style_bg_path
            bg2 = self.cfg.style_bg2_path or self.cfg.style_fg_path
            self.style_fg2 = self._load_style(fg2)
            self.style_bg2 = self._load_style(bg2)

    def reset_stream(self):
        """Forget all previous-frame statistics (start of a new clip)."""
        self.fg_states = fresh_states()
        self.bg_states = fresh_states()
        if getattr(self, "transition", False):
            self.fg2_states = fresh_states()
            self.bg2_states = fresh_states()

    def _transition_weight(self, i):
        sched = self.cfg.transition_schedule
        xs = np.array([f for f, _ in sched], dtype=np.float64)
        ws = np.array([w for _, w in sched], dtype=np.float64)
        return float(np.interp(i, xs, ws))

    def _predict_grid(self, pyr, style_pyr, mask_vals, states, timings, stage):
        with _timed(timings, stage):
            feat, states = splat_forward(
                pyr, style_pyr, mask_vals, states, self.weights, self.cfg.alpha)
            head = conv2d(feat, GRID_PATH["GRID"], *self.weights.conv("GRID"))
            # The head predicts a residual around the identity transform so
            # an untrained network renders a near-passthrough, not black.
            grid = grid_from_head(head)
            grid = AffineBilateralGrid(grid.cells + IDENTITY_AFFINE)
        return grid, states

    def keyframe_grids(self, index, frame, mask, timings):
        """Grid-prediction path for one keyframe.

        Returns (blended grid, alternate blended grid or None, extras).
        """
        cfg = self.cfg
        lsz = cfg.lowres_size
        with _timed(timings, "downsample"):
            lr = resize_bilinear(frame, lsz, lsz)
            lr_mask = resize_bilinear(mask.values, lsz, lsz)[:, :, 0]
        with _timed(timings, "mask_enhance"):
            enhanced = enhance_mask(Mask(lr_mask), self.weights)
        with _timed(timings, "features"):
            pyr = self.extractor.extract(lr)
        try:
            fg_grid, self.fg_states = self._predict_grid(
                pyr, self.style_fg, enhanced.values, self.fg_states,
                timings, "grid_fg")
            bg_grid, self.bg_states = self._predict_grid(
                pyr, self.style_bg, 1.0 - enhanced.values, self.bg_states,
                timings, "grid_bg")
        except EmptyMask as exc:
            raise EmptyMask(f"frame {index}: {exc}") from exc
        with _timed(timings, "guide"):
            enhanced_full = resize_bilinear(
                enhanced.values, frame.shape[0], frame.shape[1])[:, :, 0]
            guide_full = guide_map(frame, enhanced_full, self.weights)
        with _timed(timings, "grid_mask"):
            guide_lr = resize_bilinear(guide_full, lsz, lsz)[:, :, 0]
            sgrid = soft_grid_mask(guide_lr, enhanced, cfg.grid_dims)
        with _timed(timings, "blend"):
            blended = blend_grids(fg_grid, bg_grid, sgrid)
        alt = None
        if self.transition:
            fg2, self.fg2_states = self._predict_grid(
                pyr, self.style_fg2, enhanced.values, self.fg2_states,
                timings, "grid_fg")
            bg2, self.bg2_states = self._predict_grid(
                pyr, self.style_bg2, 1.0 - enhanced.values, self.bg2_states,
                timings, "grid_bg")
            with _timed(timings, "blend"):
                alt = blend_grids(fg2, bg2, sgrid)
        extras = {"fg_grid": fg_grid, "bg_grid": bg_grid, "grid_mask": sgrid,
                  "guide_full": guide_full, "enhanced": enhanced}
        return blended, alt, extras

    def frame_guide(self, frame, mask, timings):
        """Full-resolution path inputs for a non-keyframe."""
        lsz = self.cfg.lowres_size
        with _timed(timings, "downsample"):
            lr_mask = resize_bilinear(mask.values, lsz, lsz)[:, :, 0]
        with _timed(timings, "mask_enhance"):
            enhanced = enhance_mask(Mask(lr_mask), self.weights)
        with _timed(timings, "guide"):
            enhanced_full = resize_bilinear(
                enhanced.values, frame.shape[0], frame.shape[1])[:, :, 0]
            guide_full = guide_map(frame, enhanced_full, self.weights)
        return guide_full

    def run_clip(self, source, sink=None):
        """Process a clip in stream order. ``sink(index, image)`` receives
        each rendered frame; returns one FrameResult per frame."""
        cfg = self.cfg
        n = len(source)
        if n == 0:
            raise MissingFrame("clip has no frames")
        r = cfg.grid_rate
        keyframes = list(range(0, n, r))
        results = [FrameResult(index=i) for i in range(n)]

        def finish(i, grid, alt, guide_full, frame=None):
            res = results[i]
            if self.transition and alt is not None:
                grid = lerp_grids(grid, alt, self._transition_weight(i))
            if frame is None:
                frame = source.frame(i)
            if guide_full is None:
                guide_full = self.frame_guide(frame, source.mask(i), res.timings)
            with _timed(res.timings, "render"):
                out = render(grid, frame, guide_full)
            if cfg.keep_frames:
                res.frame = out
            if sink is not None:
                res.path = sink(i, out)
            return res

        prev = None  # (index, grid, alt)
        for k in keyframes:
            res = results[k]
            res.is_keyframe = True
            frame = source.frame(k)
            blended, alt, extras = self.keyframe_grids(
                k, frame, source.mask(k), res.timings)
            if cfg.keep_internals or cfg.dump_grids:
                res.fg_grid = extras["fg_grid"]
                res.bg_grid = extras["bg_grid"]
                res.grid_mask = extras["grid_mask"]
                res.blended = blended
            if prev is not None:
                pk, pgrid, palt = prev
                for t in range(pk + 1, k):
                    tt = (t - pk) / r
                    g = lerp_grids(pgrid, blended, tt)
                    a = lerp_grids(palt, alt, tt) if alt is not None else None
                    finish(t, g, a, None)
            finish(k, blended, alt, extras["guide_full"], frame=frame)
            prev = (k, blended, alt)
        # Trailing frames after the last keyframe reuse its grids.
        pk, pgrid, palt = prev
        for t in range(pk + 1, n):
            finish(t, pgrid, palt, None)
        return results


def _make_sink(out_dir, dump_grids):
    os.makedirs(out_dir, exist_ok=True)
    if dump_grids:
        os.makedirs(os.path.join(out_dir, "grids"), exist_ok=True)

    def sink(index, image):
        path = os.path.join(out_dir, frame_io.frame_name(index))
        frame_io.save_image(image, path)
        return path

    return sink


def run_pipeline(config, weights=None):
    """Stylize a frame directory; returns per-frame results."""
    runner = PipelineRunner(config, weights=weights)
    source = DirectorySource(config.content_dir, config.mask_dir)
    sink = _make_sink(config.out_dir, config.dump_grids)
    results = runner.run_clip(source, sink)
    if config.dump_grids:
        for res in results:
            if res.is_keyframe and res.blended is not None:
                save_grid(res.blended, os.path.join(
                    config.out_dir, "grids",
                    frame_io.frame_name(res.index).replace(".png", ".abgr")))
    return results


WARMUP_FRAMES = 3
MIN_TIMED_FRAMES = 20


def benchmark(config, resolutions, frames_per_run=None):
    """Per-stage timing table over the config's clip at each resolution.

    The clip is resized to each square resolution and cycled so at least
    MIN_TIMED_FRAMES frames are measured after WARMUP_FRAMES of warmup.
    Rows: (resolution, stage, mean_ms, std_ms, n). Also writes
    ``benchmark.csv`` under the output directory.
    """
    base = DirectorySource(config.content_dir, config.mask_dir)
    total = (frames_per_run or (WARMUP_FRAMES + MIN_TIMED_FRAMES))
    if total < WARMUP_FRAMES + MIN_TIMED_FRAMES:
        raise ConfigError(
            f"benchmark needs >= {WARMUP_FRAMES + MIN_TIMED_FRAMES} frames")
    rows = []
    for size in resolutions:
        frames, masks = [], []
        for i in range(total):
            j = i % len(base)
            frames.append(resize_bilinear(base.frame(j), size, size))
            masks.append(Mask(resize_bilinear(base.mask(j).values, size, size)[:, :, 0]))
        runner = PipelineRunner(config)
        results = runner.run_clip(ArraySource(frames, masks))
        timed = results[WARMUP_FRAMES:]
        for stage in STAGES:
            vals = [res.timings[stage] for res in timed if stage in res.timings]
            if not vals:
                continue
            rows.append({"resolution": size, "stage": stage,
                         "mean_ms": float(np.mean(vals)),
                         "std_ms": float(np.std(vals)), "n": len(vals)})
        totals = [sum(res.timings.values()) for res in timed]
        rows.append({"resolution": size, "stage": "total",
                     "mean_ms": float(np.mean(totals)),
                     "std_ms": float(np.std(totals)), "n": len(totals)})
    os.makedirs(config.out_dir, exist_ok=True)
    csv_path = os.path.join(config.out_dir, "benchmark.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["resolution", "stage", "mean_ms", "std_ms", "n"])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _load_flows(flow_dir, n_frames):
    if flow_dir is None:
        raise MissingFlow("metrics report requested without a flow directory")
    names = sorted(f for f in os.listdir(flow_dir) if f.endswith(".flo"))
    if len(names) != n_frames - 1:
        raise LengthMismatch(
            f"need {n_frames - 1} flow files, found {len(names)}")
    return [read_flo(os.path.join(flow_dir, f)) for f in names]


def evaluate_metrics(config, weights=None):
    """Run the pipeline and score its outputs.

    Reports the per-term objective values (averaged per frame, keyframes
    for the grid terms) plus the normalized warping error, written to
    ``metrics.json`` in the output directory.
    """
    cfg = config
    runner = PipelineRunner(cfg, weights=weights)
    source = DirectorySource(cfg.content_dir, cfg.mask_dir)
    flows = _load_flows(cfg.flow_dir, len(source))
    cfg.keep_internals = True
    sink = _make_sink(cfg.out_dir, cfg.dump_grids)
    results = runner.run_clip(source, sink)

    outputs = [frame_io.load_image(res.path) for res in results]
    contents = [source.frame(i) for i in range(len(source))]
    lsz = cfg.lowres_size
    content_terms, style_fg_terms, style_bg_terms, guide_terms = [], [], [], []
    mask_terms, reg_terms = [], []
    last_grid_mask = None
    for i, res in enumerate(results):
        out_lr = resize_bilinear(outputs[i], lsz, lsz)
        in_lr = resize_bilinear(contents[i], lsz, lsz)
        pyr_out = runner.extractor.extract(out_lr)
        pyr_in = runner.extractor.extract(in_lr)
        content_terms.append(content_loss(pyr_out, pyr_in))
        style_fg_terms.append(style_loss(pyr_out, runner.style_fg))
        style_bg_terms.append(style_loss(pyr_out, runner.style_bg))
        guide_full = runner.frame_guide(contents[i], source.mask(i), {})
        guide_terms.append(guide_loss(guide_full, contents[i]))
        if res.is_keyframe:
            last_grid_mask = res.grid_mask
            reg_terms.append(laplacian_reg(res.fg_grid, res.bg_grid))
        if last_grid_mask is not None:
            mask_terms.append(mask_loss(
                guide_full, last_grid_mask, source.mask(i)))
    visibilities = [visibility_mask(contents[t], contents[t - 1], flows[t - 1])
                    for t in range(1, len(contents))]
    werr = warping_error(outputs, flows, visibilities)
    parts = {
        "content": float(np.mean(content_terms)),
        "style": float(np.mean(style_fg_terms + style_bg_terms)),
        "reg": float(np.mean(reg_terms)),
        "mask": float(np.mean(mask_terms)),
        "guide": float(np.mean(guide_terms)),
        "temporal": werr,
    }
    report = {
        "losses": parts,
        "style_fg": float(np.mean(style_fg_terms)),
        "style_bg": float(np.mean(style_bg_terms)),
        "warping_error": werr,
        "total": total_loss(parts, LossWeights()),
        "frames": len(results),
        "keyframes": sum(1 for res in results if res.is_keyframe),
    }
    with open(os.path.join(cfg.out_dir, "metrics.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    return report
