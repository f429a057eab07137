import numpy as np
import pytest

from gridstyle import frame_io
from gridstyle.mask_pipeline import Mask
from gridstyle.weight_io import seeded_init, seeded_pipeline_bundle


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bundle42():
    return seeded_pipeline_bundle(42)


@pytest.fixture(scope="session")
def mask_net42():
    return seeded_init(42, "mask_net")


def disk_mask(size, cx=None, cy=None, radius=None):
    cx = size / 2 if cx is None else cx
    cy = size / 2 if cy is None else cy
    radius = size / 4 if radius is None else radius
    yy, xx = np.mgrid[0:size, 0:size]
    return ((xx - cx) ** 2 + (yy - cy) ** 2 <= radius ** 2).astype(np.float32)


def smooth_noise(shape, seed, blur=4):
    """Band-limited random texture in [0, 1]."""
    gen = np.random.default_rng(seed)
    base = gen.random(shape).astype(np.float32)
    for axis in range(2):
        for _ in range(blur):
            base = 0.5 * base + 0.25 * (np.roll(base, 1, axis=axis)
                                        + np.roll(base, -1, axis=axis))
    lo, hi = base.min(), base.max()
    return (base - lo) / max(hi - lo, 1e-9)


def panning_clip(n_frames, size, seed=7, step=1, noise=0.0):
    """Clip panning over a fixed texture, with the matching backward flow.

    Frame t shows columns [t*step, t*step + size) of the texture, so the
    flow from frame t back to frame t-1 is a constant (+step, 0).
    """
    tex = smooth_noise((size, size + n_frames * step, 3), seed)
    gen = np.random.default_rng(seed + 1)
    frames = []
    for t in range(n_frames):
        f = tex[:, t * step:t * step + size].copy()
        if noise:
            f = np.clip(f + noise * gen.standard_normal(f.shape).astype(np.float32),
                        0, 1)
        frames.append(f.astype(np.float32))
    flow = np.zeros((size, size, 2), dtype=np.float32)
    flow[:, :, 0] = step
    flows = [flow.copy() for _ in range(n_frames - 1)]
    return frames, flows


def write_clip(tmp_path, frames, masks, name_frames="content", name_masks="masks"):
    cdir = tmp_path / name_frames
    mdir = tmp_path / name_masks
    cdir.mkdir()
    mdir.mkdir()
    for i, (f, m) in enumerate(zip(frames, masks)):
        frame_io.save_image(f, str(cdir / f"frame_{i + 1:06d}.png"))
        mv = m.values if isinstance(m, Mask) else np.asarray(m)
        frame_io.save_image(np.repeat(mv[:, :, None], 3, axis=2),
                            str(mdir / f"frame_{i + 1:06d}.png"))
    return str(cdir), str(mdir)


def write_style(tmp_path, name, seed, size=64):
    path = tmp_path / name
    frame_io.save_image(smooth_noise((size, size, 3), seed), str(path))
    return str(path)
