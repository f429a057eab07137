"""Dense float32 image/feature primitives: masked channel statistics,
2-D convolution, bilinear resize, and luma conversion.

All arrays are numpy float32 in (height, width, channels) layout. Every
function is pure and returns newly allocated arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadKernel, ChannelMismatch, EmptyMask, ShapeMismatch

# Degenerate-mask threshold and the variance floor used when converting
# variance to a standard deviation (keeps constant regions finite).
MASK_EPS = 1e-6
STAT_EPS = 1e-5

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean and population variance of a feature map."""

    mean: np.ndarray  # (C,) float64
    var: np.ndarray   # (C,) float64

    @property
    def channels(self):
        return self.mean.shape[0]

    @property
    def std(self):
        """Standard deviation with the variance floor applied."""
        return np.sqrt(self.var + STAT_EPS)


@dataclass(frozen=True)
class ConvLayerSpec:
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    stride: int = 1
    activation: str = "none"  # none | relu | sigmoid

    def __post_init__(self):
        if self.kernel_size not in (1, 3):
            raise BadKernel(f"kernel_size must be 1 or 3, got {self.kernel_size}")
        if self.stride not in (1, 2):
            raise BadKernel(f"stride must be 1 or 2, got {self.stride}")
        if self.activation not in ("none", "relu", "sigmoid"):
            raise BadKernel(f"unknown activation {self.activation!r}")

    @property
    def weight_shape(self):
        k = self.kernel_size
        return (k, k, self.in_channels, self.out_channels)


def _as_map(x, name="input"):
    x = np.asarray(x, dtype=np.float32)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3:
        raise ShapeMismatch(f"{name} must be HxWxC, got shape {x.shape}")
    return x


def channel_stats(x):
    """Unmasked per-channel statistics (identical to an all-ones mask)."""
    x = _as_map(x)
    return masked_stats(x, np.ones(x.shape[:2], dtype=np.float32))


def masked_stats(x, m):
    """Weighted per-channel statistics over the region selected by ``m``.

    mean[c] = sum(x[...,c] * m) / sum(m); var[c] is the matching weighted
    population variance. Pixels with m == 0 never influence the result.
    """
    x = _as_map(x)
    m = np.asarray(m, dtype=np.float32)
    if m.ndim == 3 and m.shape[2] == 1:
        m = m[:, :, 0]
    if m.shape != x.shape[:2]:
        raise ShapeMismatch(f"mask shape {m.shape} does not match map {x.shape[:2]}")
    w = m.astype(np.float64)
    wsum = w.sum()
    if wsum < MASK_EPS:
        raise EmptyMask(f"mask weight sum {wsum:.3g} below {MASK_EPS}")
    xf = x.astype(np.float64)
    mean = np.einsum("hwc,hw->c", xf, w) / wsum
    centered = xf - mean
    var = np.einsum("hwc,hwc,hw->c", centered, centered, w) / wsum
    return ChannelStats(mean=mean, var=np.maximum(var, 0.0))


def conv2d(x, spec, weights, bias):
    """2-D cross-correlation with zero padding and optional activation.

    Spatial size is preserved at stride 1 and halved (for even inputs) at
    stride 2. ``weights`` has shape (k, k, C_in, C_out), ``bias`` (C_out,).
    """
    x = _as_map(x)
    weights = np.asarray(weights, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if weights.shape != spec.weight_shape:
        raise ShapeMismatch(
            f"weight shape {weights.shape} != expected {spec.weight_shape}")
    if bias.shape != (spec.out_channels,):
        raise ShapeMismatch(f"bias shape {bias.shape} != ({spec.out_channels},)")
    if x.shape[2] != spec.in_channels:
        raise ChannelMismatch(
            f"input has {x.shape[2]} channels, spec expects {spec.in_channels}")
    h, w = x.shape[:2]
    k, s = spec.kernel_size, spec.stride
    if h < k or w < k:
        raise ShapeMismatch(f"spatial dims {h}x{w} smaller than kernel {k}")
    p = k // 2
    if p:
        xp = np.zeros((h + 2 * p, w + 2 * p, x.shape[2]), dtype=np.float32)
        xp[p:-p, p:-p] = x
    else:
        xp = x
    oh = (h + 2 * p - k) // s + 1
    ow = (w + 2 * p - k) // s + 1
    if k == 3 and s == 1:
        out = _conv3x3_s1(x, xp, weights, bias, oh, ow)
    else:
        out = np.broadcast_to(bias, (oh, ow, spec.out_channels)).astype(np.float32)
        out = np.ascontiguousarray(out)
        flat = out.reshape(oh * ow, spec.out_channels)
        for dy in range(k):
            for dx in range(k):
                patch = xp[dy:dy + (oh - 1) * s + 1:s,
                           dx:dx + (ow - 1) * s + 1:s, :]
                flat += patch.reshape(oh * ow, spec.in_channels) @ weights[dy, dx]
    if spec.activation == "relu":
        np.maximum(out, 0.0, out=out)
    elif spec.activation == "sigmoid":
        out = _sigmoid(out)
    return out


# Row-chunk size for the 3x3 stride-1 paths, chosen so per-chunk
# temporaries stay cache-resident at video resolutions.
_CONV_CHUNK = 64


def _conv3x3_s1(x, xp, weights, bias, oh, ow):
    """3x3 stride-1 convolution (``x`` unpadded, ``xp`` zero-padded).

    Single-output layers use one GEMM over all nine taps plus shifted
    adds; few-channel inputs go through row-chunked im2col; wider ones
    accumulate the nine taps, which avoids the large column buffer. All
    orders are within normal float rounding of each other.
    """
    ci = xp.shape[2]
    co = weights.shape[3]
    out = np.empty((oh, ow, co), dtype=np.float32)
    if co == 1:
        # The input is read once instead of once per tap.
        wall = weights.reshape(9, ci).T
        y = (x.reshape(-1, ci) @ wall).reshape(oh, ow, 9)
        acc = np.zeros((oh + 2, ow + 2), dtype=np.float32)
        k = 0
        for dy in range(3):
            for dx in range(3):
                acc[2 - dy:oh + 2 - dy, 2 - dx:ow + 2 - dx] += y[:, :, k]
                k += 1
        out[:, :, 0] = acc[1:-1, 1:-1]
        out += bias
    elif ci <= 4:
        wm = weights.reshape(9 * ci, co)
        for y0 in range(0, oh, _CONV_CHUNK):
            y1 = min(y0 + _CONV_CHUNK, oh)
            win = np.lib.stride_tricks.sliding_window_view(
                xp[y0:y1 + 2], (3, 3), axis=(0, 1))
            col = win.transpose(0, 1, 3, 4, 2).reshape((y1 - y0) * ow, 9 * ci)
            out[y0:y1] = (col @ wm).reshape(y1 - y0, ow, co)
        out += bias
    else:
        for y0 in range(0, oh, _CONV_CHUNK):
            y1 = min(y0 + _CONV_CHUNK, oh)
            acc = np.ascontiguousarray(
                np.broadcast_to(bias, (y1 - y0, ow, co)).astype(np.float32))
            flat = acc.reshape(-1, co)
            for dy in range(3):
                for dx in range(3):
                    patch = xp[y0 + dy:y1 + dy, dx:dx + ow]
                    flat += patch.reshape(-1, ci) @ weights[dy, dx]
            out[y0:y1] = acc
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lerp(a, b, f):
    # a + f*(b - a): exact when a == b bitwise, unlike (1-f)*a + f*b.
    return a + f * (b - a)


def resize_bilinear(x, out_h, out_w):
    """Edge-clamped bilinear resampling with half-pixel-center alignment."""
    x = _as_map(x)
    if out_h < 1 or out_w < 1:
        raise ShapeMismatch(f"output size {out_h}x{out_w} must be positive")
    h, w, _ = x.shape
    if (out_h, out_w) == (h, w):
        return x.copy()

    def axis_coords(n_in, n_out):
        scale = n_in / n_out
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = (src - lo).astype(np.float32)
        return lo, hi, frac

    ylo, yhi, fy = axis_coords(h, out_h)
    xlo, xhi, fx = axis_coords(w, out_w)
    top = _lerp(x[ylo][:, xlo], x[ylo][:, xhi], fx[None, :, None])
    bot = _lerp(x[yhi][:, xlo], x[yhi][:, xhi], fx[None, :, None])
    return _lerp(top, bot, fy[:, None, None]).astype(np.float32)


def to_grayscale(image):
    """Rec. 601 luma of an RGB image in [0, 1], returned as HxWx1."""
    image = _as_map(image)
    if image.shape[2] != 3:
        raise ChannelMismatch(f"expected 3 channels, got {image.shape[2]}")
    gray = image @ LUMA_WEIGHTS
    return gray[:, :, None].astype(np.float32)
