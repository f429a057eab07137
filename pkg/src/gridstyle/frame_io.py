"""PNG sequence ingestion and encoding.

Frames are zero-padded numbered PNGs (frame_000001.png). Masks are
single-channel 8-bit grayscale scaled to [0, 1], no thresholding.
"""

import os

import numpy as np
from PIL import Image

from .errors import DataError, MissingFrame
from .mask_pipeline import Mask

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


def list_frames(directory):
    try:
        names = sorted(
            f for f in os.listdir(directory)
            if f.lower().endswith(IMAGE_EXTENSIONS))
    except OSError as exc:
        raise MissingFrame(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise MissingFrame(f"no frames found in {directory}")
    return [os.path.join(directory, f) for f in names]


def load_image(path):
    """RGB float32 image in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def load_mask(path, provenance="raw"):
    """Grayscale mask in [0, 1]."""
    try:
        with Image.open(path) as img:
            arr = np.asarray(img.convert("L"), dtype=np.float32)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode mask {path}: {exc}") from exc
    return Mask(arr / 255.0, provenance=provenance)


def to_uint8(image):
    return np.clip(np.rint(np.clip(image, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)


def save_image(image, path):
    Image.fromarray(to_uint8(image), mode="RGB").save(path)


def frame_name(index):
    """1-based zero-padded output frame name."""
    return f"frame_{index + 1:06d}.png"
