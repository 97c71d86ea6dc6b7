"""Image codecs: PNG read/write, JPEG read, 3-channel 8-bit normalization."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = ["load_image", "decode_image", "save_png", "encode_png"]

# Level 0 (stored, uncompressed) keeps PNG encode off the critical path;
# files stay valid PNGs, just larger than a compressing encoder would emit.
_PNG_COMPRESS_LEVEL = 0


def _normalize(pil_img: Image.Image) -> np.ndarray:
    # convert("RGB") replicates grayscale into three channels and expands
    # palette images; alpha is discarded.
    if pil_img.mode != "RGB":
        pil_img = pil_img.convert("RGB")
    arr = np.asarray(pil_img, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"decoded image has unexpected shape {arr.shape}")
    return arr


def load_image(path: Path | str) -> np.ndarray:
    """Load PNG or JPEG as an ``(H, W, 3)`` uint8 array."""
    with Image.open(path) as img:
        return _normalize(img)


def decode_image(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return _normalize(img)


def save_png(img: np.ndarray, path: Path | str) -> None:
    Image.fromarray(img if img.shape[2] == 3 else np.repeat(img, 3, axis=2)).save(
        path, format="PNG", compress_level=_PNG_COMPRESS_LEVEL)


def encode_png(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG", compress_level=_PNG_COMPRESS_LEVEL)
    return buf.getvalue()
