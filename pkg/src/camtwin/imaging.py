"""Pure image transforms for the conversion pipeline.

Everything here is deterministic integer arithmetic: area-average resize,
RGB to Bayer mosaic with bit-depth scaling, a reference bilinear demosaic
for inspection, pixel-wise comparison, and the raw mosaic file format.
The mosaic step never synthesizes values (every output sample is an input
channel value shifted left), so the verifier and the twin agree bit-exactly.
All rounding is round-half-up on non-negative integers.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from camtwin._atomicio import atomic_bytes

# Channel index (0=R, 1=G, 2=B) at (row parity, column parity).
PATTERN_TILES: dict[str, tuple[tuple[int, int], tuple[int, int]]] = {
    "RGGB": ((0, 1), (1, 2)),
    "BGGR": ((2, 1), (1, 0)),
    "GRBG": ((1, 0), (2, 1)),
    "GBRG": ((1, 2), (0, 1)),
}

# Wire codes for the BAY1 container.
PATTERN_CODES = {"RGGB": 0, "BGGR": 1, "GRBG": 2, "GBRG": 3}
_CODE_PATTERNS = {v: k for k, v in PATTERN_CODES.items()}

BAY_MAGIC = b"BAY1"
_BAY_HEADER = struct.Struct("<4sIIHH")


class Upscale(ValueError):
    """Resize target exceeds the source in some dimension."""


class OddDimensions(ValueError):
    """Mosaic operations need even width and height."""


class ShapeMismatch(ValueError):
    """Compared images differ in dimensions, depth, or pattern."""


class FormatError(ValueError):
    """A raw mosaic file failed validation."""


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit-per-channel image, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError(f"expected (h, w, 3) uint8 pixels, got {p.shape} {p.dtype}")
        if p.shape[0] == 0 or p.shape[1] == 0:
            raise ValueError("image dimensions must be positive")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class BayerImage:
    """Single-channel mosaic, samples shaped (height, width), < 2^bit_depth."""

    samples: np.ndarray
    pattern: str = "BGGR"
    bit_depth: int = 10

    def __post_init__(self) -> None:
        s = self.samples
        if s.ndim != 2 or s.dtype != np.uint16:
            raise ValueError(f"expected (h, w) uint16 samples, got {s.shape} {s.dtype}")
        if s.shape[0] == 0 or s.shape[1] == 0:
            raise ValueError("image dimensions must be positive")
        if s.shape[0] % 2 or s.shape[1] % 2:
            raise OddDimensions(f"mosaic dimensions must be even, got {s.shape[1]}x{s.shape[0]}")
        if self.pattern not in PATTERN_TILES:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if not 8 <= self.bit_depth <= 16:
            raise ValueError(f"bit_depth must be in [8, 16], got {self.bit_depth}")
        if s.size and int(s.max()) >= 1 << self.bit_depth:
            raise ValueError(f"sample {int(s.max())} out of range for {self.bit_depth}-bit")

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class DiffReport:
    """Pixel-wise comparison outcome; first_diff_index is row-major."""

    deviations: int
    max_abs_delta: int
    first_diff_index: int | None

    def __post_init__(self) -> None:
        if (self.deviations == 0) != (self.first_diff_index is None):
            raise ValueError("deviations and first_diff_index disagree")


def _round_div(num: np.ndarray, den) -> np.ndarray:
    # Round-half-up for non-negative integers.
    return (2 * num + den) // (2 * den)


def _overlap_weights(n_src: int, n_dst: int) -> np.ndarray:
    # weight[t, s] = overlap of target cell t with source cell s on an axis
    # scaled by n_dst so all boundaries are integers.  Each row sums to n_src.
    t = np.arange(n_dst, dtype=np.int64)[:, None]
    s = np.arange(n_src, dtype=np.int64)[None, :]
    lo = np.maximum(t * n_src, s * n_dst)
    hi = np.minimum((t + 1) * n_src, (s + 1) * n_dst)
    return np.maximum(hi - lo, 0)


def resize_area(img: RgbImage, out_w: int, out_h: int) -> RgbImage:
    """Box-average downscale to exactly (out_w, out_h).

    Each output value is the round-half-up mean of the source pixels its
    cell covers, with fractional coverage weighted exactly.  Float64 is
    used only as an exact integer carrier (all partial sums stay below
    2^53 for any source under ~3e13 pixels).
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"target dimensions must be positive, got {out_w}x{out_h}")
    h, w = img.height, img.width
    if out_w > w or out_h > h:
        raise Upscale(f"cannot resize {w}x{h} up to {out_w}x{out_h}")
    if (out_w, out_h) == (w, h):
        return RgbImage(img.pixels.copy())
    wy = _overlap_weights(h, out_h).astype(np.float64)
    wx = _overlap_weights(w, out_w).astype(np.float64)
    acc = np.tensordot(wy, img.pixels.astype(np.float64), axes=(1, 0))  # (out_h, w, 3)
    acc = np.tensordot(acc, wx, axes=(1, 1))                            # (out_h, 3, out_w)
    sums = np.rint(acc).astype(np.int64).transpose(0, 2, 1)
    out = _round_div(sums, np.int64(h) * np.int64(w))
    return RgbImage(out.astype(np.uint8))


def rgb_to_bayer(img: RgbImage, pattern: str = "BGGR", bit_depth: int = 10) -> BayerImage:
    """Drop the two interpolated channels at each position, then shift 8→bit_depth.

    The kept channel follows the pattern's (row parity, column parity)
    tile; scaling is a left shift by (bit_depth - 8), exactly undone by
    the matching right shift.
    """
    if pattern not in PATTERN_TILES:
        raise ValueError(f"unknown pattern {pattern!r}")
    if not 8 <= bit_depth <= 16:
        raise ValueError(f"bit_depth must be in [8, 16], got {bit_depth}")
    if img.width % 2 or img.height % 2:
        raise OddDimensions(f"need even dimensions, got {img.width}x{img.height}")
    tile = PATTERN_TILES[pattern]
    out = np.empty((img.height, img.width), dtype=np.uint16)
    for ry in (0, 1):
        for cx in (0, 1):
            out[ry::2, cx::2] = img.pixels[ry::2, cx::2, tile[ry][cx]]
    out <<= bit_depth - 8
    return BayerImage(out, pattern=pattern, bit_depth=bit_depth)


def demosaic_bilinear(img: BayerImage) -> RgbImage:
    """Reference demosaic for inspection; never used in verification.

    Each channel at each pixel is the round-half-up mean of that
    channel's samples within the 3x3 neighborhood, with the mosaic
    replicated outward at the edges.  Any 3x3 window covers both row and
    both column parities, so every channel is present in every window.
    """
    h, w = img.height, img.width
    tile = PATTERN_TILES[img.pattern]
    padded = np.pad(img.samples.astype(np.int64), 1, mode="edge")
    rgb = np.empty((h, w, 3), dtype=np.int64)
    for ch in range(3):
        mask = np.zeros((h, w), dtype=np.int64)
        for ry in (0, 1):
            for cx in (0, 1):
                if tile[ry][cx] == ch:
                    mask[ry::2, cx::2] = 1
        pmask = np.pad(mask, 1, mode="edge")
        pvals = padded * pmask
        num = np.zeros((h, w), dtype=np.int64)
        den = np.zeros((h, w), dtype=np.int64)
        for dy in range(3):
            for dx in range(3):
                num += pvals[dy : dy + h, dx : dx + w]
                den += pmask[dy : dy + h, dx : dx + w]
        rgb[:, :, ch] = _round_div(num, den)
    rgb >>= img.bit_depth - 8
    return RgbImage(rgb.astype(np.uint8))


def pixel_diff(a: BayerImage, b: BayerImage) -> DiffReport:
    """Count positions whose samples differ; record the worst and first."""
    if (a.width, a.height, a.bit_depth, a.pattern) != (b.width, b.height, b.bit_depth, b.pattern):
        raise ShapeMismatch(
            f"cannot compare {a.width}x{a.height}/{a.bit_depth}-bit/{a.pattern}"
            f" with {b.width}x{b.height}/{b.bit_depth}-bit/{b.pattern}"
        )
    if np.array_equal(a.samples, b.samples):
        return DiffReport(deviations=0, max_abs_delta=0, first_diff_index=None)
    diff = a.samples != b.samples
    delta = np.abs(a.samples.astype(np.int32) - b.samples.astype(np.int32))
    return DiffReport(
        deviations=int(diff.sum()),
        max_abs_delta=int(delta.max()),
        first_diff_index=int(np.flatnonzero(diff.ravel())[0]),
    )


def write_bay(img: BayerImage, path: str | os.PathLike) -> None:
    """Write the raw mosaic container (atomic: temp file + rename)."""
    header = _BAY_HEADER.pack(
        BAY_MAGIC, img.width, img.height, img.bit_depth, PATTERN_CODES[img.pattern]
    )
    body = np.ascontiguousarray(img.samples, dtype="<u2").tobytes()
    atomic_bytes(path, header + body)


def read_bay(path: str | os.PathLike) -> BayerImage:
    """Read and validate a raw mosaic container."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _BAY_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, width, height, bit_depth, code = _BAY_HEADER.unpack_from(data)
    if magic != BAY_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if code not in _CODE_PATTERNS:
        raise FormatError(f"{path}: unknown pattern code {code}")
    expected = _BAY_HEADER.size + 2 * width * height
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    samples = np.frombuffer(data, dtype="<u2", offset=_BAY_HEADER.size).reshape(height, width)
    try:
        return BayerImage(
            samples.astype(np.uint16), pattern=_CODE_PATTERNS[code], bit_depth=bit_depth
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
