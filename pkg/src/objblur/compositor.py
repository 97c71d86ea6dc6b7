"""Compositing of clean and blurred pixels: the curriculum variants.

Every variant combines a clean image ``hr`` with its blurred counterpart
``lr`` by hard per-pixel selection; no feathering, so each output pixel is
byte-identical to exactly one of the inputs.

``objblur``   select by the layout's object-box union mask; a per-sample
              draw picks whether the objects or the background get the
              blurred pixels
``fullblur``  the whole image is blurred
``cutblur``   one random rectangle of blurred pixels pasted into the clean
              image
``randmask``  objblur arithmetic, but with a mask borrowed from another
              sample in the batch
``none``      clean pass-through
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layouts import BBox

__all__ = [
    "VARIANTS",
    "BlurPolicy",
    "BranchDecision",
    "decide_branch",
    "composite_objblur",
    "composite_fullblur",
    "composite_cutblur",
    "composite_randmask",
    "draw_cutblur_patch",
]

VARIANTS = ("objblur", "fullblur", "cutblur", "randmask", "none")


@dataclass(frozen=True)
class BlurPolicy:
    """Variant selection plus its knobs.

    ``p_obj`` is the probability of blurring the objects rather than the
    background; ``start`` is the resolution reached at strength 1;
    ``cutblur_area`` bounds the patch area fraction for the cutblur variant.
    """

    variant: str = "objblur"
    p_obj: float = 0.5
    start: tuple[int, int] = (8, 8)
    cutblur_area: tuple[float, float] = (0.1, 0.5)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'")
        if not 0.0 <= self.p_obj <= 1.0:
            raise ValueError(f"p_obj must be in [0, 1], got {self.p_obj}")
        if self.start[0] < 1 or self.start[1] < 1:
            raise ValueError(f"start resolution must be >= 1, got {self.start}")
        lo, hi = self.cutblur_area
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(f"cutblur area range must satisfy 0 < lo <= hi < 1, got {self.cutblur_area}")


@dataclass(frozen=True)
class BranchDecision:
    """Outcome of the object-vs-background draw, with the uniform that produced it."""

    blur_objects: bool
    rng_draw: float


def decide_branch(rng_draw: float, p_obj: float) -> BranchDecision:
    """Blur objects iff the uniform draw falls below ``p_obj``."""
    return BranchDecision(blur_objects=rng_draw < p_obj, rng_draw=rng_draw)


def _check_pair(hr: np.ndarray, lr: np.ndarray) -> None:
    if hr.shape != lr.shape:
        raise ValueError(f"hr and lr shapes differ: {hr.shape} vs {lr.shape}")


def _check_mask(hr: np.ndarray, mask: np.ndarray) -> None:
    if mask.shape != hr.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {hr.shape[:2]}")


def composite_objblur(hr: np.ndarray, lr: np.ndarray, mask: np.ndarray,
                      blur_objects: bool) -> np.ndarray:
    """Hard-select lr inside the mask and hr outside, or the reverse."""
    _check_pair(hr, lr)
    _check_mask(hr, mask)
    sel = mask[:, :, None]
    if blur_objects:
        return np.where(sel, lr, hr)
    return np.where(sel, hr, lr)


def composite_fullblur(hr: np.ndarray, lr: np.ndarray) -> np.ndarray:
    _check_pair(hr, lr)
    return lr.copy()


def composite_cutblur(hr: np.ndarray, lr: np.ndarray, patch: BBox) -> np.ndarray:
    """Paste the blurred pixels of one rectangle into the clean image."""
    _check_pair(hr, lr)
    height, width = hr.shape[:2]
    if patch.x < 0 or patch.y < 0 or patch.x + patch.w > width or patch.y + patch.h > height:
        raise ValueError(f"patch {patch} outside {width}x{height} image")
    x0, y0, x1, y1 = patch.pixel_bounds(width, height)
    out = hr.copy()
    out[y0:y1, x0:x1] = lr[y0:y1, x0:x1]
    return out


def composite_randmask(hr: np.ndarray, lr: np.ndarray, foreign_mask: np.ndarray,
                       blur_objects: bool) -> np.ndarray:
    """Objblur arithmetic with a mask taken from another sample."""
    return composite_objblur(hr, lr, foreign_mask, blur_objects)


def draw_cutblur_patch(rng: np.random.Generator, size: tuple[int, int],
                       area_range: tuple[float, float]) -> BBox:
    """Draw one patch whose area fraction is uniform in ``area_range``.

    Side lengths scale with sqrt(area) so the patch keeps the image's
    aspect ratio; the offset is uniform over all valid positions.
    """
    width, height = size
    frac = float(rng.uniform(area_range[0], area_range[1]))
    side = frac ** 0.5
    w = min(max(1, round(width * side)), width)
    h = min(max(1, round(height * side)), height)
    x = int(rng.integers(0, width - w + 1))
    y = int(rng.integers(0, height - h + 1))
    return BBox(float(x), float(y), float(w), float(h))
