"""Objectives implemented as evaluation metrics: content/style terms over
feature pyramids, grid-mask and guide penalties, and the optical-flow
temporal term with its normalized warping-error variant.

Norms follow the defining equations literally (raw sums of squares or
absolute values, no per-pixel averaging); ``warping_error`` is the
normalized accessor intended for reporting.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .bilateral_grid import slice_scalar
from .errors import CorruptFile, LengthMismatch, ShapeMismatch
from .mask_pipeline import mask_values
from .tensor_core import _as_map, _lerp, channel_stats, to_grayscale

FLO_MAGIC = 202021.25
VISIBILITY_TAU = 0.05


@dataclass(frozen=True)
class LossWeights:
    content: float = 0.2
    style: float = 1.0
    reg: float = 0.02
    mask: float = 5.0
    guide: float = 1.5
    temporal: float = 1000.0

    def __post_init__(self):
        for name in ("content", "style", "reg", "mask", "guide", "temporal"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be >= 0")


def content_loss(feats_o, feats_i):
    """Sum of squared Frobenius feature differences across levels."""
    total = 0.0
    for a, b in zip(feats_o.levels, feats_i.levels):
        if a.shape != b.shape:
            raise ShapeMismatch(f"level shapes differ: {a.shape} vs {b.shape}")
        d = a.astype(np.float64) - b.astype(np.float64)
        total += float(np.sum(d * d))
    return total


def style_loss(feats_o, feats_s):
    """Squared differences of per-channel means and stds across levels."""
    total = 0.0
    for a, b in zip(feats_o.levels, feats_s.levels):
        if a.shape[2] != b.shape[2]:
            raise ShapeMismatch(
                f"level channels differ: {a.shape[2]} vs {b.shape[2]}")
        sa, sb = channel_stats(a), channel_stats(b)
        total += float(np.sum((sa.mean - sb.mean) ** 2))
        total += float(np.sum((sa.std - sb.std) ** 2))
    return total


def mask_loss(z, m_grid, m_gt):
    """Squared L2 distance between the sliced grid mask and ground truth."""
    gt = mask_values(m_gt)
    sliced = slice_scalar(m_grid, z)[:, :, 0]
    if sliced.shape != gt.shape:
        raise ShapeMismatch(f"slice shape {sliced.shape} != mask {gt.shape}")
    d = sliced.astype(np.float64) - gt
    return float(np.sum(d * d))


def guide_loss(z, image):
    """Squared L2 distance between the guide map and input luminance."""
    z = _as_map(z, "guide")[:, :, 0]
    gray = to_grayscale(image)[:, :, 0]
    if z.shape != gray.shape:
        raise ShapeMismatch(f"guide shape {z.shape} != image {gray.shape}")
    d = z.astype(np.float64) - gray
    return float(np.sum(d * d))


def warp(image, flow):
    """Backward warp: sample ``image`` at (x + dx, y + dy), edge-clamped
    bilinear."""
    image = _as_map(image, "image")
    flow = np.asarray(flow, dtype=np.float32)
    h, w = image.shape[:2]
    if flow.shape != (h, w, 2):
        raise ShapeMismatch(f"flow shape {flow.shape} != {(h, w, 2)}")
    sx = np.clip(np.arange(w, dtype=np.float64)[None, :] + flow[:, :, 0], 0, w - 1)
    sy = np.clip(np.arange(h, dtype=np.float64)[:, None] + flow[:, :, 1], 0, h - 1)
    # floor then clamp the upper neighbor: integer sample positions get
    # frac == 0 and reproduce pixels exactly (zero flow is the identity).
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0).astype(np.float32)[:, :, None]
    fy = (sy - y0).astype(np.float32)[:, :, None]
    top = _lerp(image[y0, x0], image[y0, x1], fx)
    bot = _lerp(image[y1, x0], image[y1, x1], fx)
    return _lerp(top, bot, fy).astype(np.float32)


def visibility_mask(i_t, i_prev, flow, tau=VISIBILITY_TAU):
    """Photometric-consistency visibility: 1 where the mean absolute
    channel difference against the warped previous frame is <= tau."""
    i_t = _as_map(i_t, "frame")
    i_prev = _as_map(i_prev, "previous frame")
    if i_t.shape != i_prev.shape:
        raise ShapeMismatch(f"frame shapes differ: {i_t.shape} vs {i_prev.shape}")
    diff = np.abs(i_t - warp(i_prev, flow)).mean(axis=2)
    return (diff <= tau).astype(np.float32)


def temporal_loss(frames, flows, visibilities):
    """Visibility-masked L1 flow-warping differences, summed over the clip."""
    if len(flows) != len(frames) - 1 or len(visibilities) != len(flows):
        raise LengthMismatch(
            f"need T frames, T-1 flows and visibilities; got "
            f"{len(frames)}, {len(flows)}, {len(visibilities)}")
    total = 0.0
    for t in range(1, len(frames)):
        cur = _as_map(frames[t], "frame")
        warped = warp(frames[t - 1], flows[t - 1])
        v = np.asarray(visibilities[t - 1], dtype=np.float64)
        diff = np.abs(cur.astype(np.float64) - warped).sum(axis=2)
        total += float(np.sum(v * diff))
    return total


def warping_error(frames, flows, visibilities):
    """Temporal loss normalized by the visible pixel-channel count."""
    total = temporal_loss(frames, flows, visibilities)
    channels = _as_map(frames[0], "frame").shape[2]
    denom = sum(float(np.sum(v)) for v in visibilities) * channels
    return total / denom if denom > 0 else 0.0


def total_loss(parts, w=LossWeights()):
    """Weighted sum of the six loss terms.

    ``parts`` maps term names (content, style, reg, mask, guide,
    temporal) to their values; missing terms count as zero.
    """
    return (w.content * parts.get("content", 0.0)
            + w.style * parts.get("style", 0.0)
            + w.reg * parts.get("reg", 0.0)
            + w.mask * parts.get("mask", 0.0)
            + w.guide * parts.get("guide", 0.0)
            + w.temporal * parts.get("temporal", 0.0))


def read_flo(path):
    """Middlebury .flo reader (little-endian, interleaved float pairs)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise CorruptFile(f"{path}: truncated .flo header")
    magic, = struct.unpack_from("<f", blob, 0)
    if magic != FLO_MAGIC:
        raise CorruptFile(f"{path}: bad .flo magic {magic!r}")
    w, h = struct.unpack_from("<ii", blob, 4)
    if w <= 0 or h <= 0 or len(blob) != 12 + 8 * w * h:
        raise CorruptFile(f"{path}: malformed .flo dimensions {w}x{h}")
    data = np.frombuffer(blob, dtype="<f4", offset=12)
    return data.reshape(h, w, 2).copy()


def write_flo(flow, path):
    flow = np.asarray(flow, dtype="<f4")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(flow.tobytes())
