"""Instance-normalization style transfer operators and the splatting path
that turns multi-scale content/style features into grid-predictor input.

The four operators form a reduction lattice: the spatiotemporal variant
with an all-ones mask equals the temporal one, the temporal one at
alpha = 0 equals plain transfer, and so on. The implementations share one
core so those identities hold exactly.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ChannelMismatch, ShapeMismatch
from .tensor_core import (ChannelStats, channel_stats, conv2d, masked_stats,
                          resize_bilinear)
from .weight_io import GRID_PATH, TEST_EXTRACTOR

SPLAT_BLOCKS = 3


@dataclass(frozen=True)
class TransferState:
    """Previous-frame statistics carried across a video stream.

    ``valid`` is False on the first frame, in which case the temporal
    blend weight is forced to zero.
    """

    stats: Optional[ChannelStats] = None
    valid: bool = False


@dataclass(frozen=True)
class FeaturePyramid:
    """Feature maps at relative scales 1, 1/2, 1/4, 1/8 of one image."""

    levels: tuple

    def __post_init__(self):
        if len(self.levels) != 4:
            raise ShapeMismatch(f"expected 4 levels, got {len(self.levels)}")
        h, w = self.levels[0].shape[:2]
        for i, lvl in enumerate(self.levels):
            if lvl.shape[:2] != (h >> i, w >> i):
                raise ShapeMismatch(
                    f"level {i} has shape {lvl.shape[:2]}, "
                    f"expected {(h >> i, w >> i)}")

    @property
    def channels(self):
        return tuple(lvl.shape[2] for lvl in self.levels)


def _apply(x, mu, sigma, y_stats):
    if y_stats.channels != x.shape[2]:
        raise ChannelMismatch(
            f"map has {x.shape[2]} channels, target stats {y_stats.channels}")
    out = y_stats.std * (x.astype(np.float64) - mu) / sigma + y_stats.mean
    return out.astype(np.float32)


def adain(x, y_stats):
    """Re-standardize ``x`` per channel and match the target statistics."""
    s = channel_stats(x)
    return _apply(x, s.mean, s.std, y_stats)


def sa_adain(x, y_stats, m):
    """Spatially-aware variant: statistics come from the masked region,
    the normalization is applied to every pixel."""
    s = masked_stats(x, m)
    return _apply(x, s.mean, s.std, y_stats)


def st_adain(x_t, state, y_stats, m_t, alpha):
    """Spatiotemporal variant: masked statistics blended with the previous
    frame's. Returns the output map and the updated state."""
    cur = masked_stats(x_t, m_t)
    a = float(alpha) if state.valid else 0.0
    if a == 0.0:
        mu, sigma = cur.mean, cur.std
    else:
        prev = state.stats
        if prev.channels != cur.channels:
            raise ChannelMismatch(
                f"state has {prev.channels} channels, map {cur.channels}")
        mu = (1.0 - a) * cur.mean + a * prev.mean
        sigma = (1.0 - a) * cur.std + a * prev.std
    out = _apply(x_t, mu, sigma, y_stats)
    return out, TransferState(stats=cur, valid=True)


def tc_adain(x_t, state, y_stats, alpha):
    """Temporally coherent variant (whole-frame statistics)."""
    ones = np.ones(np.asarray(x_t).shape[:2], dtype=np.float32)
    return st_adain(x_t, state, y_stats, ones, alpha)


class FeatureExtractor:
    """Interface: map a low-resolution RGB image to a FeaturePyramid."""

    def extract(self, image) -> FeaturePyramid:
        raise NotImplementedError


class FixtureExtractor(FeatureExtractor):
    """Shipped test extractor: a fixed 4-level strided-conv stack whose
    weights (E1-E4) come from the seeded initializer."""

    def __init__(self, weights):
        self.weights = weights

    def extract(self, image):
        levels = []
        x = np.asarray(image, dtype=np.float32)
        for name in ("E1", "E2", "E3", "E4"):
            k, b = self.weights.conv(name)
            x = conv2d(x, TEST_EXTRACTOR[name], k, b)
            levels.append(x)
        return FeaturePyramid(levels=tuple(levels))


def fresh_states():
    """One TransferState per splatting block, all invalid (stream start)."""
    return [TransferState() for _ in range(SPLAT_BLOCKS)]


def _inject(x, level):
    up = resize_bilinear(level, x.shape[0], x.shape[1])
    return np.concatenate([x, up], axis=2)


def splat_forward(content, style, m_t, states, weights, alpha):
    """Forward pass of the three splatting blocks plus the L1/L2/F tail.

    Each block runs two shared convolutions, transfers the content
    statistics toward the style path's at that depth, then runs a third
    shared convolution. The next pyramid level is concatenated before each
    block's first convolution. Returns the (lowres/16)^2 x 64 map and the
    per-block updated states.
    """
    if len(states) != SPLAT_BLOCKS:
        raise ShapeMismatch(f"expected {SPLAT_BLOCKS} states, got {len(states)}")
    if content.channels != style.channels:
        raise ChannelMismatch(
            f"content channels {content.channels} != style {style.channels}")
    xc = _inject(content.levels[0], content.levels[1])
    xs = _inject(style.levels[0], style.levels[1])
    new_states = []
    for i in range(SPLAT_BLOCKS):
        for layer in (f"S{i + 1}_1", f"S{i + 1}_2"):
            spec = GRID_PATH[layer]
            k, b = weights.conv(layer)
            xc = conv2d(xc, spec, k, b)
            xs = conv2d(xs, spec, k, b)
        y_stats = channel_stats(xs)
        m_i = resize_bilinear(m_t, xc.shape[0], xc.shape[1])[:, :, 0]
        xc, st = st_adain(xc, states[i], y_stats, m_i, alpha)
        new_states.append(st)
        layer = f"S{i + 1}_3"
        k, b = weights.conv(layer)
        xc = conv2d(xc, GRID_PATH[layer], k, b)
        xs = conv2d(xs, GRID_PATH[layer], k, b)
        if i + 2 < len(content.levels):
            xc = _inject(xc, content.levels[i + 2])
            xs = _inject(xs, style.levels[i + 2])
    for layer in ("L1", "L2", "F"):
        k, b = weights.conv(layer)
        xc = conv2d(xc, GRID_PATH[layer], k, b)
    return xc, new_states
