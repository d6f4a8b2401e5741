"""Canonical image types, quantization, and bit-exact file I/O.

Conventions used everywhere in this package: intensities live in [0, 1] as
float32, arrays are row-major with the origin at the top-left corner,
x is the column index and y is the row index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError, UnsupportedFormat

__all__ = [
    "GrayImage",
    "RgbImage",
    "LabelMask",
    "ProbMap",
    "ImageSpec",
    "quantize",
    "dequantize",
    "load_pgm",
    "save_pgm",
    "load_srt",
    "save_srt",
]

PROB_SUM_TOL = 1e-6

# Refuse SRT tensors above this element count; dims are attacker-controlled
# when they arrive over the wire protocol.
MAX_SRT_ELEMENTS = 2**28


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GrayImage:
    """A 2-D scalar intensity field with values in [0, 1], float32."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"GrayImage needs a (H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("GrayImage values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class RgbImage:
    """Three stacked GrayImage channels, shape (3, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise ShapeError(f"RgbImage needs a (3, H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("RgbImage values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("RgbImage values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def channel(self, k: int) -> GrayImage:
        return GrayImage(self.data[k])


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class indices in {0, ..., num_classes - 1}."""

    data: np.ndarray
    num_classes: int = 2

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"LabelMask needs a (H, W) array, got shape {arr.shape}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("LabelMask data must be integral")
        if arr.size and (arr.min() < 0 or arr.max() >= self.num_classes):
            raise ValueError(
                f"label values must lie in [0, {self.num_classes - 1}]"
            )
        object.__setattr__(self, "data", _freeze(arr.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def one_hot(self) -> np.ndarray:
        """(C, H, W) float64 indicator view of the mask."""
        c = np.arange(self.num_classes, dtype=np.uint8)
        return (self.data[None, :, :] == c[:, None, None]).astype(np.float64)


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class probabilities, shape (C, H, W), simplex per pixel."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[0] < 2:
            raise ShapeError(f"ProbMap needs a (C>=2, H, W) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ProbMap values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("ProbMap values must lie in [0, 1]")
        sums = arr.sum(axis=0, dtype=np.float64)
        worst = float(np.max(np.abs(sums - 1.0)))
        if worst > PROB_SUM_TOL:
            raise ValueError(
                f"per-pixel class probabilities must sum to 1 within {PROB_SUM_TOL}, "
                f"worst deviation {worst:.3g}"
            )
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def argmax_label(self) -> LabelMask:
        """Per-pixel argmax; ties resolve to the lowest class index."""
        return LabelMask(
            np.argmax(self.data, axis=0).astype(np.uint8), self.num_classes
        )


@dataclass(frozen=True)
class ImageSpec:
    """Gray-level discretization used by histogram equalization and file I/O."""

    gray_levels: int = 256

    def __post_init__(self):
        if self.gray_levels < 2:
            raise ValueError("gray_levels must be >= 2")


def quantize(img: GrayImage, spec: ImageSpec = ImageSpec()) -> np.ndarray:
    """Map [0,1] intensities to integer levels {0..L-1} via round-half-up."""
    L = spec.gray_levels
    return np.floor(img.data.astype(np.float64) * (L - 1) + 0.5).astype(np.int32)


def dequantize(levels: np.ndarray, spec: ImageSpec = ImageSpec()) -> GrayImage:
    """Inverse of :func:`quantize`: level / (L-1)."""
    L = spec.gray_levels
    return GrayImage((np.asarray(levels, dtype=np.float64) / (L - 1)).astype(np.float32))


# ---------------------------------------------------------------------------
# PGM: binary "P5", maxval 255.


def load_pgm(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255); pixels map to p / 255."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {blob[:2]!r})")

    # Header tokens: width, height, maxval. Whitespace-separated, '#' comments
    # allowed, exactly one whitespace byte after maxval, then the payload.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if pos >= len(blob) or not blob[pos : pos + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after maxval")
    pos += 1

    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric PGM header field") from exc
    if width < 1 or height < 1:
        raise FormatError(f"{path}: bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: only maxval 255 is supported, got {maxval}")

    payload = blob[pos:]
    if len(payload) != width * height:
        raise FormatError(
            f"{path}: expected {width * height} payload bytes, got {len(payload)}"
        )
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayImage((raw.astype(np.float64) / 255.0).astype(np.float32))


def save_pgm(img: GrayImage, path) -> None:
    """Write a binary PGM; the exact inverse of load_pgm through 256-level quantization."""
    levels = quantize(img, ImageSpec(256)).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(levels.tobytes())


# ---------------------------------------------------------------------------
# SRT tensor files: magic "SRT1", u8 dtype code (1=f32, 2=u8), u8 ndim (1-4),
# ndim x u32 little-endian dims, C-order little-endian payload. No trailing
# bytes permitted.

_SRT_MAGIC = b"SRT1"
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("u1")}
_DTYPE_TO_CODE = {np.dtype(np.float32): 1, np.dtype(np.uint8): 2}


def save_srt(tensor: np.ndarray, path) -> None:
    """Write a float32 or uint8 tensor (1-4 dims) in SRT format."""
    arr = np.asarray(tensor)
    code = _DTYPE_TO_CODE.get(arr.dtype)
    if code is None:
        raise FormatError(f"SRT supports float32 and uint8, got {arr.dtype}")
    if not 1 <= arr.ndim <= 4:
        raise FormatError(f"SRT supports 1-4 dims, got {arr.ndim}")
    if arr.size == 0:
        raise FormatError("SRT does not carry empty tensors")
    header = _SRT_MAGIC + struct.pack("<BB", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_srt(path) -> np.ndarray:
    """Read an SRT tensor; raises FormatError on any structural defect."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated SRT header")
    if blob[:4] != _SRT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    code, ndim = blob[4], blob[5]
    dtype = _DTYPE_CODES.get(code)
    if dtype is None:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if not 1 <= ndim <= 4:
        raise FormatError(f"{path}: ndim must be 1-4, got {ndim}")
    dims_end = 6 + 4 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"{path}: truncated SRT dims")
    dims = struct.unpack(f"<{ndim}I", blob[6:dims_end])
    if any(d == 0 for d in dims):
        raise FormatError(f"{path}: zero-sized dim in {dims}")
    n_elems = 1
    for d in dims:
        n_elems *= d
    if n_elems > MAX_SRT_ELEMENTS:
        raise FormatError(f"{path}: dim overflow, {dims} exceeds element limit")
    expected = n_elems * dtype.itemsize
    payload = blob[dims_end:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: expected {expected} payload bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
