"""Mask handling: the enhancement network, morphological noisy-mask
synthesis for testing, and the soft grid mask used to blend the
foreground and background transform grids.
"""

from dataclasses import dataclass

import numpy as np

from .bilateral_grid import ScalarGrid
from .errors import BadKernel, NonDivisibleDims, ShapeMismatch
from .tensor_core import conv2d
from .weight_io import MASK_NET

PROVENANCES = ("raw", "enhanced", "ground_truth")


@dataclass(frozen=True)
class Mask:
    values: np.ndarray  # (H, W) float32 in [0, 1]
    provenance: str = "raw"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim == 3 and v.shape[2] == 1:
            v = v[:, :, 0]
        if v.ndim != 2:
            raise ShapeMismatch(f"mask must be HxW, got shape {v.shape}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))


def mask_values(m):
    """Accept a Mask or a bare array and return (H, W) float32 values."""
    if isinstance(m, Mask):
        return m.values
    return Mask(m).values


def enhance_mask(m, weights):
    """Three-layer enhancement network; last layer is a sigmoid, so the
    output is a soft mask strictly inside (0, 1)."""
    x = mask_values(m)[:, :, None]
    for name in ("M1", "M2", "M3"):
        k, b = weights.conv(name)
        x = conv2d(x, MASK_NET[name], k, b)
    return Mask(x[:, :, 0], provenance="enhanced")


def morph(m, op, kernel):
    """Windowed min (erode) or max (dilate) with edge-clamped borders."""
    if kernel < 1 or kernel % 2 == 0:
        raise BadKernel(f"kernel must be odd and >= 1, got {kernel}")
    if op not in ("erode", "dilate"):
        raise ValueError(f"op must be 'erode' or 'dilate', got {op!r}")
    v = mask_values(m)
    if kernel == 1:
        return Mask(v.copy(), provenance=_prov(m))
    r = kernel // 2
    padded = np.pad(v, r, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kernel, kernel))
    reduced = windows.min(axis=(2, 3)) if op == "erode" else windows.max(axis=(2, 3))
    return Mask(reduced, provenance=_prov(m))


def _prov(m):
    return m.provenance if isinstance(m, Mask) else "raw"


NOISE_KERNELS = (3, 5, 7, 9)


def synthesize_noisy_mask(gt, seed):
    """Degrade a ground-truth mask with random-kernel erosion/dilation.

    Deterministic per seed: two kernel sizes are drawn from {3,5,7,9} and
    a coin flip picks erode-then-dilate or the reverse order.
    """
    rng = np.random.default_rng(seed)
    k1, k2 = rng.choice(NOISE_KERNELS, size=2)
    ops = ("erode", "dilate") if rng.integers(2) == 0 else ("dilate", "erode")
    out = morph(gt, ops[0], int(k1))
    out = morph(out, ops[1], int(k2))
    return Mask(out.values, provenance="raw")


def soft_grid_mask(z, m, dims, variant="literal"):
    """Per-cell depth histogram of foreground pixels as a ScalarGrid.

    Each pixel is binned at depth floor(z * m * D), clamped to D - 1.
    The default "literal" variant initializes every depth entry of a cell
    to the cell's total foreground count and then overwrites the depth
    bins actually present in the patch; the "splat" variant keeps the
    pure histogram with no initialization fill. Values are normalized by
    the patch area, so they always lie in [0, 1].
    """
    z = np.asarray(z, dtype=np.float32)
    if z.ndim == 3 and z.shape[2] == 1:
        z = z[:, :, 0]
    mv = mask_values(m)
    if z.shape != mv.shape:
        raise ShapeMismatch(f"guide shape {z.shape} != mask shape {mv.shape}")
    wg, hg, depth = dims
    h, w = z.shape
    if h % hg != 0 or w % wg != 0:
        raise NonDivisibleDims(
            f"image {h}x{w} not divisible by grid {hg}x{wg}")
    if variant not in ("literal", "splat"):
        raise ValueError(f"unknown variant {variant!r}")
    sh, sw = h // hg, w // wg
    area = sh * sw
    zd = np.floor(np.clip(z, 0.0, 1.0) * mv * depth).astype(np.int64)
    np.clip(zd, 0, depth - 1, out=zd)

    # Cell index for every pixel, then one bincount over (cell, depth).
    cy = np.repeat(np.arange(hg), sh)[:, None]
    cx = np.repeat(np.arange(wg), sw)[None, :]
    cell = (cx * hg + cy)  # (h, w), x-major to match (W, H, D) cell layout
    flat_idx = (cell * depth + zd).ravel()

    if variant == "splat":
        fg = (mv > 0.0).ravel()
        hist = np.bincount(flat_idx[fg], minlength=wg * hg * depth)
        cells = hist.reshape(wg, hg, depth).astype(np.float32) / area
        return ScalarGrid(cells)

    hist = np.bincount(flat_idx, minlength=wg * hg * depth)
    hist = hist.reshape(wg, hg, depth)
    count_pos = (area - hist[:, :, 0])[:, :, None]  # count(patch > 0)
    # Initialization fill for bins absent from the patch; observed bins
    # d >= 1 are overwritten with their own counts, bin 0 keeps the fill.
    cells = np.where(hist > 0, hist, count_pos)
    cells[:, :, 0] = count_pos[:, :, 0]
    return ScalarGrid(cells.astype(np.float32) / area)
