"""Parameter container for the small networks, its file format, and a
platform-independent seeded initializer.

File layout (all integers little-endian):

    magic "LVSTW001" | version u32 | entry count u32
    per entry: name length u32, UTF-8 name, ndim u32, dims u32 * ndim
    raw float32 payloads, concatenated in entry order
    CRC32 of everything above, u32

Convolution layers are stored as two entries: ``<name>`` holds the
(k, k, C_in, C_out) kernel and ``<name>_b`` the (C_out,) bias.
"""

import struct
import zlib

import numpy as np

from .errors import CorruptFile, ShapeMismatch, UnknownVersion, WeightMissing
from .tensor_core import ConvLayerSpec

MAGIC = b"LVSTW001"
FORMAT_VERSION = 1

# Layer tables for each sub-network. Names follow S<block>_<layer> for the
# splatting blocks. The S*_1 input widths assume the fixture extractor's
# channel declaration (8, 16, 32, 64) with the next pyramid level
# concatenated before each block's first convolution.
MASK_NET = {
    "M1": ConvLayerSpec(1, 16, 3, 1, "none"),
    "M2": ConvLayerSpec(16, 8, 3, 1, "none"),
    "M3": ConvLayerSpec(8, 1, 3, 1, "sigmoid"),
}

GUIDE_NET = {
    "G1": ConvLayerSpec(4, 16, 3, 1, "none"),
    "G2": ConvLayerSpec(16, 1, 3, 1, "sigmoid"),
}

GRID_PATH = {
    "S1_1": ConvLayerSpec(24, 8, 3, 2, "relu"),
    "S1_2": ConvLayerSpec(8, 8, 3, 1, "relu"),
    "S1_3": ConvLayerSpec(8, 8, 3, 1, "relu"),
    "S2_1": ConvLayerSpec(40, 16, 3, 2, "relu"),
    "S2_2": ConvLayerSpec(16, 16, 3, 1, "relu"),
    "S2_3": ConvLayerSpec(16, 16, 3, 1, "relu"),
    "S3_1": ConvLayerSpec(80, 32, 3, 2, "relu"),
    "S3_2": ConvLayerSpec(32, 32, 3, 1, "relu"),
    "S3_3": ConvLayerSpec(32, 32, 3, 1, "relu"),
    "L1": ConvLayerSpec(32, 64, 3, 2, "relu"),
    "L2": ConvLayerSpec(64, 64, 3, 1, "relu"),
    "F": ConvLayerSpec(64, 64, 3, 1, "relu"),
    "GRID": ConvLayerSpec(64, 96, 1, 1, "none"),
}

TEST_EXTRACTOR = {
    "E1": ConvLayerSpec(3, 8, 3, 1, "relu"),
    "E2": ConvLayerSpec(8, 16, 3, 2, "relu"),
    "E3": ConvLayerSpec(16, 32, 3, 2, "relu"),
    "E4": ConvLayerSpec(32, 64, 3, 2, "relu"),
}

ARCHITECTURES = {
    "mask_net": MASK_NET,
    "guide_net": GUIDE_NET,
    "grid_path": GRID_PATH,
    "test_extractor": TEST_EXTRACTOR,
}

# Known-name shape table used for validation on construction and load.
KNOWN_SHAPES = {}
for _table in ARCHITECTURES.values():
    for _name, _spec in _table.items():
        KNOWN_SHAPES[_name] = _spec.weight_shape
        KNOWN_SHAPES[_name + "_b"] = (_spec.out_channels,)


class WeightBundle:
    """Ordered name -> float32 array container with shape validation."""

    def __init__(self, entries=None, format_version=FORMAT_VERSION):
        self.format_version = format_version
        self._entries = {}
        for name, data in (entries or {}).items():
            self.put(name, data)

    def put(self, name, data):
        data = np.ascontiguousarray(data, dtype=np.float32)
        if not np.all(np.isfinite(data)):
            raise ShapeMismatch(f"layer {name!r} contains non-finite values")
        expected = KNOWN_SHAPES.get(name)
        if expected is not None and data.shape != expected:
            raise ShapeMismatch(
                f"layer {name!r} has shape {data.shape}, expected {expected}")
        self._entries[name] = data

    def __contains__(self, name):
        return name in self._entries

    def names(self):
        return list(self._entries)

    def get(self, name):
        try:
            return self._entries[name]
        except KeyError:
            raise WeightMissing(name) from None

    def conv(self, name):
        """Kernel and bias for a convolution layer."""
        return self.get(name), self.get(name + "_b")

    def merged(self, other):
        """New bundle containing this bundle's entries plus ``other``'s."""
        out = WeightBundle(self._entries)
        for name in other.names():
            out.put(name, other.get(name))
        return out

    def __eq__(self, other):
        if not isinstance(other, WeightBundle):
            return NotImplemented
        if self.format_version != other.format_version:
            return False
        if self.names() != other.names():
            return False
        return all(
            np.array_equal(self._entries[n], other._entries[n],)
            and self._entries[n].tobytes() == other._entries[n].tobytes()
            for n in self._entries)


def save(bundle, path):
    parts = [MAGIC, struct.pack("<II", bundle.format_version, len(bundle.names()))]
    payload = []
    for name in bundle.names():
        data = bundle.get(name)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        payload.append(data.astype("<f4").tobytes())
    blob = b"".join(parts) + b"".join(payload)
    blob += struct.pack("<I", zlib.crc32(blob))
    with open(path, "wb") as fh:
        fh.write(blob)


def load(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CorruptFile(f"{path}: cannot read weight file: {exc}") from exc
    if len(blob) < len(MAGIC) + 12 or blob[:len(MAGIC)] != MAGIC:
        raise CorruptFile(f"{path}: bad magic")
    crc_stored, = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != crc_stored:
        raise CorruptFile(f"{path}: CRC mismatch")
    off = len(MAGIC)
    version, count = struct.unpack_from("<II", blob, off)
    off += 8
    if version != FORMAT_VERSION:
        raise UnknownVersion(f"{path}: format version {version}")
    metas = []
    try:
        for _ in range(count):
            nlen, = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            ndim, = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{ndim}I", blob, off)
            off += 4 * ndim
            metas.append((name, shape))
    except struct.error as exc:
        raise CorruptFile(f"{path}: truncated header") from exc
    bundle = WeightBundle(format_version=version)
    for name, shape in metas:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = off + 4 * n
        if end > len(blob) - 4:
            raise CorruptFile(f"{path}: truncated payload for {name!r}")
        data = np.frombuffer(blob[off:end], dtype="<f4").reshape(shape)
        off = end
        bundle.put(name, data)
    return bundle


# ---------------------------------------------------------------------------
# Seeded initialization. Uses SplitMix64 streams (one per layer, keyed by an
# FNV-1a hash of the layer name) so results are identical on every platform:
# the generator is pure 64-bit integer arithmetic, and each output is mapped
# to a float via (top 24 bits) / 2^23 - 1, giving a value in [-1, 1).
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(seed, n):
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + np.arange(1, n + 1, dtype=np.uint64) * _SM_GAMMA
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _fnv1a64(name):
    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _uniform(seed, name, n):
    bits = _splitmix64(seed ^ _fnv1a64(name), n)
    return ((bits >> np.uint64(40)).astype(np.float64) / float(2 ** 23) - 1.0)


def seeded_init(seed, arch):
    """Deterministic weights for one of the named architectures.

    Kernels are uniform in [-1, 1) scaled by 1/sqrt(fan_in); biases are zero.
    """
    try:
        table = ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; "
                         f"choose from {sorted(ARCHITECTURES)}") from None
    bundle = WeightBundle()
    for name, spec in table.items():
        shape = spec.weight_shape
        fan_in = spec.kernel_size * spec.kernel_size * spec.in_channels
        vals = _uniform(seed, name, int(np.prod(shape))) / np.sqrt(fan_in)
        bundle.put(name, vals.astype(np.float32).reshape(shape))
        bundle.put(name + "_b", np.zeros(spec.out_channels, dtype=np.float32))
    return bundle


def seeded_pipeline_bundle(seed):
    """All four sub-networks in one bundle, as used by the pipeline."""
    out = WeightBundle()
    for arch in ("mask_net", "guide_net", "grid_path", "test_extractor"):
        out = out.merged(seeded_init(seed, arch))
    return out
