"""Affine bilateral grid: a W x H x D lattice of 3x4 color transforms,
plus the scalar-grid variant used for soft grid masks.

Sampling convention: a coordinate u in [0, 1] maps linearly onto cell
centers, u = 0 hitting center 0 and u = 1 hitting center W - 1;
out-of-range coordinates are clamped. Trilinear interpolation is done
with nested lerps of the form a + f * (b - a), which reproduce constant
grids bitwise.
"""

import struct
from dataclasses import dataclass

import numba
import numpy as np

from .errors import CorruptFile, ShapeMismatch
from .tensor_core import _as_map, _lerp

GRID_MAGIC = b"ABGR1"

IDENTITY_AFFINE = np.array(
    [1, 0, 0, 0,
     0, 1, 0, 0,
     0, 0, 1, 0], dtype=np.float32)


def _check_dims(cells, tail):
    if cells.ndim != 3 + len(tail) or cells.shape[3:] != tail:
        raise ShapeMismatch(f"bad cell array shape {cells.shape}")
    if min(cells.shape[:3]) < 2:
        raise ShapeMismatch(
            f"grid dims {cells.shape[:3]} must all be >= 2 for trilinear sampling")
    if not np.all(np.isfinite(cells)):
        raise ShapeMismatch("grid contains non-finite values")


@dataclass(frozen=True)
class AffineBilateralGrid:
    """cells[x, y, d] holds a row-major 3x4 affine matrix as 12 floats."""

    cells: np.ndarray  # (W, H, D, 12) float32

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.float32)
        _check_dims(cells, (12,))
        object.__setattr__(self, "cells", cells)

    @property
    def dims(self):
        return self.cells.shape[:3]

    @classmethod
    def constant(cls, affine, dims=(16, 16, 8)):
        affine = np.asarray(affine, dtype=np.float32).reshape(12)
        w, h, d = dims
        return cls(np.broadcast_to(affine, (w, h, d, 12)).copy())

    @classmethod
    def identity(cls, dims=(16, 16, 8)):
        return cls.constant(IDENTITY_AFFINE, dims)


@dataclass(frozen=True)
class ScalarGrid:
    """cells[x, y, d] in [0, 1]; values are clamped on construction."""

    cells: np.ndarray  # (W, H, D) float32

    def __post_init__(self):
        cells = np.clip(np.asarray(self.cells, dtype=np.float32), 0.0, 1.0)
        _check_dims(cells, ())
        object.__setattr__(self, "cells", np.ascontiguousarray(cells))

    @property
    def dims(self):
        return self.cells.shape

    @classmethod
    def constant(cls, value, dims=(16, 16, 8)):
        return cls(np.full(dims, value, dtype=np.float32))


def grid_from_head(head):
    """Reshape a (H, W, 12*D) prediction into an affine grid.

    Channel c maps to depth c // 12 and row-major matrix entry c % 12.
    The reshape is lossless; ``grid_to_head`` is its inverse.
    """
    head = _as_map(head, "head")
    h, w, c = head.shape
    if c % 12 != 0:
        raise ShapeMismatch(f"head channel count {c} is not a multiple of 12")
    d = c // 12
    # (h, w, d, 12) -> cells indexed (x, y, d)
    cells = head.reshape(h, w, d, 12).transpose(1, 0, 2, 3)
    return AffineBilateralGrid(cells.copy())


def grid_to_head(grid):
    """Inverse of grid_from_head."""
    w, h, d = grid.dims
    return grid.cells.transpose(1, 0, 2, 3).reshape(h, w, d * 12).copy()


def _axis_sample(coord, n):
    g = np.clip(coord, 0.0, 1.0).astype(np.float64) * (n - 1)
    lo = np.floor(g).astype(np.int64)
    lo = np.minimum(lo, n - 2)
    frac = (g - lo).astype(np.float32)
    return lo, frac


def _sample_cells(cells, u, v, z):
    """Trilinear sampling of cells (W, H, D, ...) at broadcastable u, v, z."""
    w, h, d = cells.shape[:3]
    x0, fx = _axis_sample(u, w)
    y0, fy = _axis_sample(v, h)
    z0, fz = _axis_sample(z, d)
    tail = (1,) * (cells.ndim - 3)
    fx = fx.reshape(fx.shape + tail)
    fy = fy.reshape(fy.shape + tail)
    fz = fz.reshape(fz.shape + tail)
    c00 = _lerp(cells[x0, y0, z0], cells[x0, y0, z0 + 1], fz)
    c01 = _lerp(cells[x0, y0 + 1, z0], cells[x0, y0 + 1, z0 + 1], fz)
    c10 = _lerp(cells[x0 + 1, y0, z0], cells[x0 + 1, y0, z0 + 1], fz)
    c11 = _lerp(cells[x0 + 1, y0 + 1, z0], cells[x0 + 1, y0 + 1, z0 + 1], fz)
    c0 = _lerp(c00, c01, fy)
    c1 = _lerp(c10, c11, fy)
    return _lerp(c0, c1, fx)


def slice_affine(grid, u, v, z):
    """Interpolated 3x4 affine at normalized coordinates (u, v, z)."""
    flat = _sample_cells(grid.cells,
                         np.float64(u), np.float64(v), np.float64(z))
    return flat.reshape(3, 4)


def slice_scalar(sgrid, guide):
    """Full-resolution scalar map sliced from a ScalarGrid by the guide."""
    guide = _as_map(guide, "guide")[:, :, 0]
    h, w = guide.shape
    u = (np.arange(w, dtype=np.float64) / max(w - 1, 1))[None, :]
    v = (np.arange(h, dtype=np.float64) / max(h - 1, 1))[:, None]
    u, v = np.broadcast_arrays(u, v)
    out = _sample_cells(sgrid.cells, u, v, guide)
    return out[:, :, None].astype(np.float32)


@numba.njit(cache=True)
def _render_kernel(cells, image, guide, out):
    gw, gh, gd = cells.shape[0], cells.shape[1], cells.shape[2]
    h, w = image.shape[0], image.shape[1]
    aff = np.empty(12, dtype=np.float32)
    for y in range(h):
        v = y / max(h - 1, 1)
        gy = v * (gh - 1)
        y0 = min(int(np.floor(gy)), gh - 2)
        fy = np.float32(gy - y0)
        for x in range(w):
            u = x / max(w - 1, 1)
            gx = u * (gw - 1)
            x0 = min(int(np.floor(gx)), gw - 2)
            fx = np.float32(gx - x0)
            z = min(max(float(guide[y, x]), 0.0), 1.0) * (gd - 1)
            z0 = min(int(np.floor(z)), gd - 2)
            fz = np.float32(z - z0)
            for k in range(12):
                c00 = cells[x0, y0, z0, k]
                c00 = c00 + fz * (cells[x0, y0, z0 + 1, k] - c00)
                c01 = cells[x0, y0 + 1, z0, k]
                c01 = c01 + fz * (cells[x0, y0 + 1, z0 + 1, k] - c01)
                c10 = cells[x0 + 1, y0, z0, k]
                c10 = c10 + fz * (cells[x0 + 1, y0, z0 + 1, k] - c10)
                c11 = cells[x0 + 1, y0 + 1, z0, k]
                c11 = c11 + fz * (cells[x0 + 1, y0 + 1, z0 + 1, k] - c11)
                c0 = c00 + fy * (c01 - c00)
                c1 = c10 + fy * (c11 - c10)
                aff[k] = c0 + fx * (c1 - c0)
            r = image[y, x, 0]
            g = image[y, x, 1]
            b = image[y, x, 2]
            for i in range(3):
                val = (aff[4 * i] * r + aff[4 * i + 1] * g
                       + aff[4 * i + 2] * b + aff[4 * i + 3])
                out[y, x, i] = min(max(val, np.float32(0.0)), np.float32(1.0))


def render(grid, image, guide):
    """Apply the grid to a full-resolution image.

    Per pixel, the affine is sliced at (x / (W-1), y / (H-1), guide) and
    multiplied against (r, g, b, 1); the result is clamped to [0, 1] at
    the very end.
    """
    image = _as_map(image, "image")
    guide = _as_map(guide, "guide")[:, :, 0]
    if image.shape[2] != 3:
        raise ShapeMismatch(f"image must be RGB, got {image.shape[2]} channels")
    if guide.shape != image.shape[:2]:
        raise ShapeMismatch(
            f"guide shape {guide.shape} != image {image.shape[:2]}")
    h, w = image.shape[:2]
    out = np.empty((h, w, 3), dtype=np.float32)
    _render_kernel(grid.cells, np.ascontiguousarray(image),
                   np.ascontiguousarray(guide), out)
    return out


def blend_grids(fg, bg, m):
    """Eq.-style convex combination: m * fg + (1 - m) * bg per cell."""
    if fg.dims != bg.dims or m.dims != fg.dims:
        raise ShapeMismatch(
            f"grid dims differ: fg {fg.dims}, bg {bg.dims}, mask {m.dims}")
    w = m.cells[:, :, :, None]
    return AffineBilateralGrid(w * fg.cells + (1.0 - w) * bg.cells)


def lerp_grids(a, b, t):
    """Entrywise linear interpolation; exact at t = 0, 1, for a == b, and
    at t = 0.5 (where it equals the entrywise mean bitwise)."""
    if a.dims != b.dims:
        raise ShapeMismatch(f"grid dims differ: {a.dims} vs {b.dims}")
    if a.cells.tobytes() == b.cells.tobytes():
        return AffineBilateralGrid(a.cells.copy())
    t = np.float32(t)
    return AffineBilateralGrid((np.float32(1) - t) * a.cells + t * b.cells)


def composite_grids(regions, bg):
    """Blend several (grid, scalar mask) regions over a background grid.

    Regions are composited in order; per-cell weights are clamped so they
    never sum past 1, and the background receives the remainder.
    """
    acc = np.zeros(bg.dims + (12,), dtype=np.float64)
    total = np.zeros(bg.dims, dtype=np.float64)
    for grid, m in regions:
        if grid.dims != bg.dims or m.dims != bg.dims:
            raise ShapeMismatch("region grid dims do not match background")
        w = np.minimum(m.cells.astype(np.float64), 1.0 - total)
        acc += w[:, :, :, None] * grid.cells
        total += w
    acc += (1.0 - total)[:, :, :, None] * bg.cells
    return AffineBilateralGrid(acc.astype(np.float32))


def laplacian_reg(fg, bg):
    """Sum of squared Frobenius differences over 6-connected neighbor
    pairs, each unordered pair counted twice, over both grids."""
    total = 0.0
    for grid in (fg, bg):
        c = grid.cells.astype(np.float64)
        for axis in range(3):
            d = np.diff(c, axis=axis)
            total += float(np.sum(d * d))
    return 2.0 * total


def save_grid(grid, path):
    cells = grid.cells
    kind = b"A" if cells.ndim == 4 else b"S"
    w, h, d = cells.shape[:3]
    blob = GRID_MAGIC + kind + struct.pack("<III", w, h, d)
    blob += cells.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def load_grid(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(GRID_MAGIC) + 13 or blob[:len(GRID_MAGIC)] != GRID_MAGIC:
        raise CorruptFile(f"{path}: bad grid magic")
    kind = blob[len(GRID_MAGIC):len(GRID_MAGIC) + 1]
    w, h, d = struct.unpack_from("<III", blob, len(GRID_MAGIC) + 1)
    body = blob[len(GRID_MAGIC) + 13:]
    per_cell = 12 if kind == b"A" else 1
    expect = w * h * d * per_cell * 4
    if kind not in (b"A", b"S") or len(body) != expect:
        raise CorruptFile(f"{path}: truncated or malformed grid file")
    cells = np.frombuffer(body, dtype="<f4")
    if kind == b"A":
        return AffineBilateralGrid(cells.reshape(w, h, d, 12))
    return ScalarGrid(cells.reshape(w, h, d))
