"""Adaptive guide map: a two-layer convnet over the image and its mask
whose sigmoid output is the z coordinate used when slicing the grids."""

import numpy as np

from .errors import ShapeMismatch
from .mask_pipeline import mask_values
from .tensor_core import _as_map, conv2d
from .weight_io import GUIDE_NET


def guide_map(image, m, weights):
    """(image, mask) -> per-pixel guide values strictly inside (0, 1)."""
    image = _as_map(image, "image")
    mv = mask_values(m)
    if mv.shape != image.shape[:2]:
        raise ShapeMismatch(
            f"mask shape {mv.shape} != image {image.shape[:2]}")
    x = np.concatenate([image, mv[:, :, None]], axis=2)
    for name in ("G1", "G2"):
        k, b = weights.conv(name)
        x = conv2d(x, GUIDE_NET[name], k, b)
    return x
