"""Scan ingestion and silhouette preprocessing.

The chain is: 8-bit BMP -> GrayImage -> low-pass filter -> threshold
binarization -> Laplacian-of-Gaussian edge map. All operations are pure
functions of their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import FormatError, SizeError

DEFAULT_DPI = 100.0
DEFAULT_THRESHOLD = 0.07
DEFAULT_SIGMA = 1.0
DEFAULT_KERNEL_RADIUS = 1

#: Hard ceiling on accepted image dimensions (pixels per side).
MAX_SIDE = 5000

_METERS_PER_INCH = 0.0254
MM_PER_INCH = 25.4


@dataclass
class GrayImage:
    """Grayscale raster with intensities in [0, 1] and a physical resolution."""

    pixels: np.ndarray  # (height, width) float64
    dpi: float = DEFAULT_DPI

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("pixels must be a non-empty 2-D array")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"intensities outside [0, 1]: min={lo}, max={hi}")
        if self.dpi <= 0:
            raise ValueError(f"dpi must be positive, got {self.dpi}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class BinaryImage:
    """Monochrome raster with values in {0, 1}; dimensions match its source."""

    bits: np.ndarray  # (height, width) uint8
    dpi: float = DEFAULT_DPI

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 2 or self.bits.size == 0:
            raise ValueError("bits must be a non-empty 2-D array")
        if self.bits.max(initial=0) > 1:
            raise ValueError("bits must contain only 0 and 1")
        if self.dpi <= 0:
            raise ValueError(f"dpi must be positive, got {self.dpi}")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


def _check_size(width: int, height: int) -> None:
    if width <= 0 or height <= 0:
        raise FormatError(f"non-positive image dimensions {width}x{height}")
    if width > MAX_SIDE or height > MAX_SIDE:
        raise SizeError(
            f"image {width}x{height} exceeds the {MAX_SIDE}x{MAX_SIDE} limit"
        )


def load_bmp(path: str | Path) -> GrayImage:
    """Decode an uncompressed 8-bit BMP as a grayscale image.

    Palette entries are reduced to luminance, pixel values map to
    intensity = value / 255, and dpi comes from the resolution fields
    (defaulting to 100 dpi when the file carries none).
    """
    data = Path(path).read_bytes()
    if len(data) < 54:
        raise FormatError(f"file too short for a BMP header ({len(data)} bytes)")
    if data[:2] != b"BM":
        raise FormatError(f"bad BMP signature {data[:2]!r}")
    pixel_offset = struct.unpack_from("<I", data, 10)[0]
    header_size = struct.unpack_from("<I", data, 14)[0]
    if header_size < 40:
        raise FormatError(f"unsupported DIB header size {header_size}")
    width, height_raw = struct.unpack_from("<ii", data, 18)
    bit_depth = struct.unpack_from("<H", data, 28)[0]
    compression = struct.unpack_from("<I", data, 30)[0]
    x_ppm = struct.unpack_from("<i", data, 38)[0]
    colors_used = struct.unpack_from("<I", data, 46)[0]

    if bit_depth != 8:
        raise FormatError(f"unsupported bit depth {bit_depth}")
    if compression != 0:
        raise FormatError(f"unsupported compression {compression}")

    top_down = height_raw < 0
    height = -height_raw if top_down else height_raw
    _check_size(width, height)

    # Palette: BGRA quads immediately after the DIB header.
    n_colors = colors_used if colors_used else 256
    palette_start = 14 + header_size
    palette_end = palette_start + 4 * n_colors
    if palette_end > len(data):
        raise FormatError("truncated palette")
    quads = np.frombuffer(data[palette_start:palette_end], dtype=np.uint8)
    quads = quads.reshape(n_colors, 4).astype(np.float64)
    luminance = np.zeros(256, dtype=np.float64)
    luminance[:n_colors] = (
        0.299 * quads[:, 2] + 0.587 * quads[:, 1] + 0.114 * quads[:, 0]
    )

    row_stride = (width + 3) & ~3
    if pixel_offset + row_stride * height > len(data):
        raise FormatError("truncated pixel data")
    raw = np.frombuffer(
        data, dtype=np.uint8, count=row_stride * height, offset=pixel_offset
    ).reshape(height, row_stride)[:, :width]
    if not top_down:
        raw = raw[::-1]

    pixels = np.clip(luminance[raw], 0.0, 255.0) / 255.0
    dpi = x_ppm * _METERS_PER_INCH if x_ppm > 0 else DEFAULT_DPI
    return GrayImage(pixels=pixels, dpi=dpi)


def save_bmp(img: GrayImage, path: str | Path) -> None:
    """Write an 8-bit grayscale BMP (identity palette, bottom-up rows)."""
    height, width = img.pixels.shape
    _check_size(width, height)
    values = np.rint(img.pixels * 255.0).astype(np.uint8)
    row_stride = (width + 3) & ~3
    ppm = round(img.dpi / _METERS_PER_INCH)
    pixel_offset = 14 + 40 + 4 * 256
    file_size = pixel_offset + row_stride * height

    header = struct.pack("<2sIHHI", b"BM", file_size, 0, 0, pixel_offset)
    dib = struct.pack(
        "<IiiHHIIiiII",
        40, width, height, 1, 8, 0, row_stride * height, ppm, ppm, 256, 0,
    )
    palette = bytes(
        b for i in range(256) for b in (i, i, i, 0)
    )
    rows = np.zeros((height, row_stride), dtype=np.uint8)
    rows[:, :width] = values[::-1]
    Path(path).write_bytes(header + dib + palette + rows.tobytes())


def lowpass_filter(img: GrayImage, kernel_radius: int = DEFAULT_KERNEL_RADIUS) -> GrayImage:
    """Box-average over the (2r+1)^2 neighbourhood with edge replication.

    Radius 0 is the identity. Plateaus where the whole window is constant
    come out bit-exact, so constant images are preserved exactly.
    """
    if kernel_radius < 0:
        raise ValueError(f"kernel_radius must be >= 0, got {kernel_radius}")
    if kernel_radius == 0:
        return GrayImage(pixels=img.pixels.copy(), dpi=img.dpi)
    size = 2 * kernel_radius + 1
    out = ndimage.uniform_filter(img.pixels, size=size, mode="nearest")
    flat = ndimage.minimum_filter(
        img.pixels, size=size, mode="nearest"
    ) == ndimage.maximum_filter(img.pixels, size=size, mode="nearest")
    out[flat] = img.pixels[flat]
    return GrayImage(pixels=np.clip(out, 0.0, 1.0), dpi=img.dpi)


def binarize(img: GrayImage, threshold: float = DEFAULT_THRESHOLD) -> BinaryImage:
    """Threshold to {0, 1}: output is 1 wherever intensity >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return BinaryImage(bits=(img.pixels >= threshold).astype(np.uint8), dpi=img.dpi)


def detect_edges_log(img: BinaryImage, sigma: float = DEFAULT_SIGMA) -> BinaryImage:
    """Laplacian-of-Gaussian zero-crossing edge map of a binary image.

    A pixel is an edge when its LoG response is negative (the bright side
    of the transition) and a 4-neighbour has positive response with the
    absolute difference above a small slope floor. Each foreground region
    yields a closed, one-pixel-wide loop just inside its boundary; an
    empty or constant image yields an empty map.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    response = ndimage.gaussian_laplace(
        img.bits.astype(np.float64), sigma=sigma, mode="nearest"
    )
    peak = float(np.abs(response).max())
    edges = np.zeros(img.bits.shape, dtype=bool)
    if peak == 0.0:
        return BinaryImage(bits=edges.astype(np.uint8), dpi=img.dpi)
    floor = 1e-6 * peak

    neg = response < 0.0
    pos = response > 0.0
    steep_v = np.abs(response[1:, :] - response[:-1, :]) > floor
    edges[1:, :] |= neg[1:, :] & pos[:-1, :] & steep_v
    edges[:-1, :] |= neg[:-1, :] & pos[1:, :] & steep_v
    steep_h = np.abs(response[:, 1:] - response[:, :-1]) > floor
    edges[:, 1:] |= neg[:, 1:] & pos[:, :-1] & steep_h
    edges[:, :-1] |= neg[:, :-1] & pos[:, 1:] & steep_h
    return BinaryImage(bits=edges.astype(np.uint8), dpi=img.dpi)


def save_pgm(img: GrayImage, path: str | Path) -> None:
    """Export as plain-text PGM (P2), one row of 0..255 values per line."""
    values = np.rint(img.pixels * 255.0).astype(int)
    lines = ["P2", f"{img.width} {img.height}", "255"]
    lines += [" ".join(str(v) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_pbm(img: BinaryImage, path: str | Path) -> None:
    """Export as plain-text PBM (P1), one row of bits per line."""
    lines = ["P1", f"{img.width} {img.height}"]
    lines += [" ".join(str(int(v)) for v in row) for row in img.bits]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
