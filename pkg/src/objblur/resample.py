"""Bit-exact bilinear resampling and the down/up blur operator.

Images are ``(H, W, C)`` uint8 arrays with C in {1, 3}.  Resampling runs in
a float32 working representation scaled to [0, 1] and follows one pinned
convention end to end so outputs are reproducible across machines and
worker counts:

* half-pixel centers: ``src = (dst + 0.5) * (in_size / out_size) - 0.5``,
* clamp-to-edge addressing for the four taps,
* interpolation ``(1-fy) * ((1-fx)*v00 + fx*v01) + fy * ((1-fx)*v10 + fx*v11)``
  evaluated in float32,
* conversion back to 8 bits rounds half away from zero.

The blur operator downsamples to an intermediate resolution derived from a
strength in [0, 1] and upsamples back, which strips high-frequency detail
while keeping structure.  Strength 0 short-circuits to a byte-identical
copy so the terminal phase of a curriculum is leak-free by construction.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "resize_bilinear",
    "resize_bilinear_float",
    "strength_to_resolution",
    "blur",
    "to_float32",
    "to_uint8",
]

_ONE = np.float32(1.0)
_HALF = np.float32(0.5)
_MAX8 = np.float32(255.0)


def _check_image(img: np.ndarray, name: str = "image") -> None:
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"{name} must be (H, W, C) with C in {{1, 3}}, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got shape {img.shape}")


def to_float32(img: np.ndarray) -> np.ndarray:
    """uint8 image to the float32 working representation in [0, 1]."""
    return img.astype(np.float32) / _MAX8


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Float32 [0, 1] image back to uint8, rounding half away from zero."""
    q = np.floor(img * _MAX8 + _HALF)
    return np.minimum(q, _MAX8).astype(np.uint8)


def _axis_taps(in_size: int, out_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tap indices and fractional weights for one axis, float32 throughout."""
    scale = np.float32(in_size) / np.float32(out_size)
    centers = (np.arange(out_size, dtype=np.float32) + _HALF) * scale - _HALF
    lo = np.floor(centers)
    frac = centers - lo
    i0 = np.clip(lo.astype(np.int64), 0, in_size - 1)
    i1 = np.clip(lo.astype(np.int64) + 1, 0, in_size - 1)
    return i0, i1, frac


def resize_bilinear_float(src: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize a float32 ``(H, W, C)`` image with the pinned bilinear convention.

    Separable evaluation: the horizontal pass computes
    ``(1-fx)*v00 + fx*v01`` per source row, the vertical pass combines rows
    with ``(1-fy)*top + fy*bot``.  This is the same float32 expression tree
    as direct per-pixel evaluation, so results are bit-identical to it.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {out_w}x{out_h}")
    _check_image(src, "source")
    in_h, in_w = src.shape[:2]
    x0, x1, fx = _axis_taps(in_w, out_w)
    y0, y1, fy = _axis_taps(in_h, out_h)
    fxb = fx[None, :, None]
    fyb = fy[:, None, None]
    rows = (_ONE - fxb) * np.take(src, x0, axis=1) + fxb * np.take(src, x1, axis=1)
    return (_ONE - fyb) * np.take(rows, y0, axis=0) + fyb * np.take(rows, y1, axis=0)


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize a uint8 image to exactly ``(out_w, out_h)``.

    Raises ``ValueError`` when a target dimension is zero or negative.
    """
    _check_image(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got dtype {img.dtype}")
    return to_uint8(resize_bilinear_float(to_float32(img), out_w, out_h))


def strength_to_resolution(
    s: float,
    full: tuple[int, int],
    start: tuple[int, int],
) -> tuple[int, int]:
    """Map blur strength to the intermediate resolution.

    Linear interpolation between the full resolution at strength 0 and the
    start resolution at strength 1, rounded half away from zero per axis::

        size_t = round((1 - s) * (full - start) + start)
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"blur strength must be in [0, 1], got {s}")
    w_full, h_full = full
    w_start, h_start = start
    if not (1 <= w_start <= w_full and 1 <= h_start <= h_full):
        raise ValueError(f"start resolution {start} must satisfy 1 <= start <= full {full}")
    w_t = math.floor((1.0 - s) * (w_full - w_start) + w_start + 0.5)
    h_t = math.floor((1.0 - s) * (h_full - h_start) + h_start + 0.5)
    return w_t, h_t


def blur(img: np.ndarray, s: float, start: tuple[int, int]) -> np.ndarray:
    """Blur by resizing down to the strength's resolution and back up.

    Strength 0 returns a byte-identical copy without resampling, so the
    clean endpoint is exact regardless of resampler rounding.
    """
    _check_image(img)
    height, width = img.shape[:2]
    if s == 0.0:
        if not (1 <= start[0] <= width and 1 <= start[1] <= height):
            raise ValueError(f"start resolution {start} exceeds image {width}x{height}")
        return img.copy()
    w_t, h_t = strength_to_resolution(s, (width, height), start)
    down = resize_bilinear(img, w_t, h_t)
    return resize_bilinear(down, width, height)
