"""Raster primitives: binary PPM (P6) round-tripping and integer upscaling.

Nearest-neighbor upscaling is the bit-exact reference path (every source
pixel becomes an f x f block); bilinear uses half-pixel-center separable
interpolation. Both operate at integer scale factors only.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ImageError
from .types import RasterImage

# A decoder turns a non-PPM file into a RasterImage; plugged in by callers
# that deal in other formats.
Decoder = Callable[[str], RasterImage]


def read_ppm_bytes(data: bytes) -> RasterImage:
    """Decode a binary P6 PPM with maxval 255. Comments are honored."""
    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch == b"#":
                while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif ch.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageError("truncated PPM header")
        return data[start:pos]

    try:
        magic = next_token()
        if magic != b"P6":
            raise ImageError(f"unsupported PPM magic {magic!r}; only binary P6 is handled")
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise ImageError(f"malformed PPM header: {exc}") from None
    if maxval != 255:
        raise ImageError(f"unsupported maxval {maxval}; expected 255")
    if width < 1 or height < 1:
        raise ImageError(f"invalid dimensions {width}x{height}")

    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise ImageError(
            f"truncated pixel data: expected {expected} bytes, got {len(raster)}"
        )
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(pixels)


def read_ppm(path: str | Path) -> RasterImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ImageError(f"cannot read image {path!r}: {exc}") from None
    return read_ppm_bytes(data)


def load_image(path: str | Path, decoder: Decoder | None = None) -> RasterImage:
    """PPM files decode natively; anything else needs the decoder slot."""
    if str(path).lower().endswith(".ppm"):
        return read_ppm(path)
    if decoder is not None:
        return decoder(path)
    raise ImageError(
        f"no decoder for {path!r}: only binary PPM is built in; pass a decoder"
    )


def ppm_bytes(image: RasterImage) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def write_ppm(image: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(ppm_bytes(image))


def scale_factor(image: RasterImage, target_min_side: int) -> int:
    """Integer factor lifting the short side to at least the target; 1 when
    the image is already large enough."""
    short = min(image.width, image.height)
    if target_min_side <= short:
        return 1
    return math.ceil(target_min_side / short)


def upscale_nearest(image: RasterImage, factor: int) -> RasterImage:
    if factor < 1:
        raise ValueError(f"scale factor must be >= 1, got {factor}")
    if factor == 1:
        return image
    px = np.repeat(np.repeat(image.pixels, factor, axis=0), factor, axis=1)
    return RasterImage(px)


def upscale_bilinear(image: RasterImage, factor: int) -> RasterImage:
    if factor < 1:
        raise ValueError(f"scale factor must be >= 1, got {factor}")
    if factor == 1:
        return image
    src = image.pixels.astype(np.float64)
    h, w = image.height, image.width

    def axis_coords(size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        # Half-pixel centers: dst center maps to (dst + 0.5) / f - 0.5.
        coords = (np.arange(size * factor, dtype=np.float64) + 0.5) / factor - 0.5
        coords = np.clip(coords, 0.0, size - 1.0)
        lo = np.floor(coords).astype(np.int64)
        hi = np.minimum(lo + 1, size - 1)
        frac = coords - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(h)
    x0, x1, fx = axis_coords(w)

    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bottom = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bottom * fy[:, None, None]
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return RasterImage(out)


def block_subsample(image: RasterImage, factor: int) -> RasterImage:
    """Inverse of nearest upscaling: take the top-left pixel of each block."""
    if factor < 1:
        raise ValueError(f"scale factor must be >= 1, got {factor}")
    return RasterImage(image.pixels[::factor, ::factor])
