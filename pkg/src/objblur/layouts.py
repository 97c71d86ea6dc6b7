"""Layout manifests: parsing, filter rules, and binary mask rasterization.

The manifest dialect is UTF-8 JSON with this shape::

    {
      "categories": [{"id": 1, "name": "thing"}, ...],
      "images": [
        {
          "id": "img_0001",
          "file": "img_0001.png",
          "width": 128,
          "height": 128,
          "objects": [{"bbox": [x, y, w, h], "category_id": 1}, ...]
        },
        ...
      ]
    }

Unknown keys are ignored.  ``file`` paths are resolved relative to the
manifest file.  Boxes that stick out of the image are clamped with a
warning; boxes and layouts are otherwise passed through untouched so
filtering stays an explicit, separate step.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "BBox",
    "Layout",
    "Manifest",
    "FilterRules",
    "FilterStats",
    "ManifestError",
    "ManifestSyntaxError",
    "ManifestSchemaError",
    "parse_manifest",
    "parse_manifest_document",
    "read_manifest",
    "serialize_manifest",
    "filter_layouts",
    "apply_filters",
    "rasterize_mask",
    "mask_digest",
]


class ManifestError(ValueError):
    """Base class for manifest ingestion failures."""


class ManifestSyntaxError(ManifestError):
    """The manifest is not well-formed JSON."""


class ManifestSchemaError(ManifestError):
    """The manifest is valid JSON but violates the documented shape."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel units, (x, y) top-left, sizes strictly positive."""

    x: float
    y: float
    w: float
    h: float

    def area(self) -> float:
        return self.w * self.h

    def pixel_bounds(self, width: int, height: int) -> tuple[int, int, int, int]:
        """Integer pixel span covered by this box, clamped to the image.

        Left/top indices are floored, right/bottom exclusive indices are
        ceiled, so a fractional box never loses pixels it touches.  Returns
        ``(x0, y0, x1, y1)`` with ``x1``/``y1`` exclusive.
        """
        x0 = min(max(math.floor(self.x), 0), width)
        y0 = min(max(math.floor(self.y), 0), height)
        x1 = min(max(math.ceil(self.x + self.w), 0), width)
        y1 = min(max(math.ceil(self.y + self.h), 0), height)
        return x0, y0, x1, y1


@dataclass(frozen=True)
class Layout:
    """One image's annotation: identifier, pixel size, and ordered objects.

    ``image_size`` is ``(width, height)``.  ``objects`` preserves manifest
    order and pairs each box with its integer class label.
    """

    image_id: str
    image_size: tuple[int, int]
    objects: tuple[tuple[BBox, int], ...]


@dataclass(frozen=True)
class FilterRules:
    """Box and layout elimination rules applied before augmentation.

    A box survives when ``w*h / (W*H) >= min_area_frac``.  A layout survives
    when, after box elimination, its object count lies in
    ``[min_objects, max_objects]`` and none of its classes is excluded.
    """

    min_area_frac: float = 0.02
    min_objects: int = 3
    max_objects: int = 8
    excluded_class_ids: frozenset[int] = frozenset()


@dataclass
class FilterStats:
    """Per-rule elimination counters, for reporting."""

    boxes_removed_area: int = 0
    layouts_dropped_count: int = 0
    layouts_dropped_excluded: int = 0

    @property
    def layouts_dropped(self) -> int:
        return self.layouts_dropped_count + self.layouts_dropped_excluded


@dataclass
class Manifest:
    """Parsed manifest: category table, layouts, and image file paths."""

    categories: dict[int, str]
    layouts: list[Layout]
    files: dict[str, str]
    base_dir: Path | None = None

    def image_path(self, image_id: str, root: Path | None = None) -> Path:
        rel = Path(self.files[image_id])
        if rel.is_absolute():
            return rel
        base = root if root is not None else (self.base_dir or Path("."))
        return Path(base) / rel


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ManifestSchemaError(f"{where}: missing required field '{key}'")
    return obj[key]


def _clamp_box(raw: BBox, size: tuple[int, int], where: str) -> BBox | None:
    """Clamp a box to the image; returns None when nothing remains."""
    width, height = size
    if raw.x >= 0 and raw.y >= 0 and raw.x + raw.w <= width and raw.y + raw.h <= height:
        return raw
    x0 = max(0.0, raw.x)
    y0 = max(0.0, raw.y)
    x1 = min(float(width), raw.x + raw.w)
    y1 = min(float(height), raw.y + raw.h)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        log.warning("%s: box %s lies outside the %dx%d image, dropped",
                    where, (raw.x, raw.y, raw.w, raw.h), width, height)
        return None
    clamped = BBox(x0, y0, x1 - x0, y1 - y0)
    if clamped != raw:
        log.warning("%s: box %s exceeds the %dx%d image, clamped to %s",
                    where, (raw.x, raw.y, raw.w, raw.h), width, height,
                    (clamped.x, clamped.y, clamped.w, clamped.h))
    return clamped


def parse_manifest_document(data: bytes | str, base_dir: Path | None = None) -> Manifest:
    """Parse manifest text into a :class:`Manifest`.

    Raises :class:`ManifestSyntaxError` (with line/column) for malformed
    JSON and :class:`ManifestSchemaError` (naming the field) for shape
    violations.  Out-of-bounds boxes are clamped with a logged warning.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ManifestSyntaxError(
            f"malformed manifest: {e.msg} at line {e.lineno} column {e.colno}"
        ) from e
    if not isinstance(doc, dict):
        raise ManifestSchemaError("manifest: top-level value must be an object")

    categories: dict[int, str] = {}
    for i, cat in enumerate(_require(doc, "categories", "manifest")):
        where = f"categories[{i}]"
        if not isinstance(cat, dict):
            raise ManifestSchemaError(f"{where}: must be an object")
        cid = _require(cat, "id", where)
        name = _require(cat, "name", where)
        if not isinstance(cid, int) or isinstance(cid, bool):
            raise ManifestSchemaError(f"{where}.id: must be an integer")
        categories[cid] = str(name)

    layouts: list[Layout] = []
    files: dict[str, str] = {}
    for i, entry in enumerate(_require(doc, "images", "manifest")):
        where = f"images[{i}]"
        if not isinstance(entry, dict):
            raise ManifestSchemaError(f"{where}: must be an object")
        image_id = str(_require(entry, "id", where))
        if image_id in files:
            raise ManifestSchemaError(f"{where}.id: duplicate image id '{image_id}'")
        file_rel = str(_require(entry, "file", where))
        width = _require(entry, "width", where)
        height = _require(entry, "height", where)
        for key, val in (("width", width), ("height", height)):
            if not isinstance(val, int) or isinstance(val, bool) or val <= 0:
                raise ManifestSchemaError(f"{where}.{key}: must be a positive integer")

        objects: list[tuple[BBox, int]] = []
        for j, obj in enumerate(_require(entry, "objects", where)):
            owhere = f"{where}.objects[{j}]"
            if not isinstance(obj, dict):
                raise ManifestSchemaError(f"{owhere}: must be an object")
            bbox = _require(obj, "bbox", owhere)
            cat_id = _require(obj, "category_id", owhere)
            if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
                raise ManifestSchemaError(f"{owhere}.bbox: must be [x, y, w, h]")
            try:
                x, y, w, h = (float(v) for v in bbox)
            except (TypeError, ValueError):
                raise ManifestSchemaError(f"{owhere}.bbox: must hold numbers") from None
            if w <= 0 or h <= 0:
                raise ManifestSchemaError(f"{owhere}.bbox: w and h must be positive")
            if not isinstance(cat_id, int) or isinstance(cat_id, bool):
                raise ManifestSchemaError(f"{owhere}.category_id: must be an integer")
            if cat_id not in categories:
                raise ManifestSchemaError(
                    f"{owhere}.category_id: {cat_id} not in declared categories")
            clamped = _clamp_box(BBox(x, y, w, h), (width, height), owhere)
            if clamped is not None:
                objects.append((clamped, cat_id))

        layouts.append(Layout(image_id, (width, height), tuple(objects)))
        files[image_id] = file_rel

    return Manifest(categories, layouts, files, base_dir)


def parse_manifest(data: bytes | str) -> list[Layout]:
    """Parse manifest text and return its layouts, unfiltered, in manifest order."""
    return parse_manifest_document(data).layouts


def read_manifest(path: Path | str) -> Manifest:
    path = Path(path)
    return parse_manifest_document(path.read_bytes(), base_dir=path.parent)


def serialize_manifest(manifest: Manifest) -> str:
    """Inverse of :func:`parse_manifest_document`; round-trips layouts exactly."""
    doc = {
        "categories": [{"id": cid, "name": name}
                       for cid, name in sorted(manifest.categories.items())],
        "images": [
            {
                "id": layout.image_id,
                "file": manifest.files.get(layout.image_id, f"{layout.image_id}.png"),
                "width": layout.image_size[0],
                "height": layout.image_size[1],
                "objects": [
                    {"bbox": [b.x, b.y, b.w, b.h], "category_id": cid}
                    for b, cid in layout.objects
                ],
            }
            for layout in manifest.layouts
        ],
    }
    return json.dumps(doc, indent=2)


def apply_filters(layouts: list[Layout], rules: FilterRules) -> tuple[list[Layout], FilterStats]:
    """Apply elimination rules, returning survivors plus per-rule counters.

    Boxes below the area fraction are removed first; a layout is then
    dropped when any remaining class is excluded or the object count falls
    outside ``[min_objects, max_objects]``.  Filtering is total and
    idempotent.
    """
    stats = FilterStats()
    kept: list[Layout] = []
    for layout in layouts:
        width, height = layout.image_size
        image_area = float(width * height)
        survivors = tuple(
            (box, cid) for box, cid in layout.objects
            if box.area() / image_area >= rules.min_area_frac
        )
        stats.boxes_removed_area += len(layout.objects) - len(survivors)
        if any(cid in rules.excluded_class_ids for _, cid in survivors):
            stats.layouts_dropped_excluded += 1
            continue
        if not rules.min_objects <= len(survivors) <= rules.max_objects:
            stats.layouts_dropped_count += 1
            continue
        kept.append(replace(layout, objects=survivors))
    return kept, stats


def filter_layouts(layouts: list[Layout], rules: FilterRules) -> list[Layout]:
    """Apply :class:`FilterRules`, returning surviving layouts in order."""
    return apply_filters(layouts, rules)[0]


def rasterize_mask(layout: Layout) -> np.ndarray:
    """Union mask of all object boxes as a ``(H, W)`` boolean array.

    Each box covers the pixel span from :meth:`BBox.pixel_bounds`;
    overlapping boxes union with no layering.
    """
    width, height = layout.image_size
    if width <= 0 or height <= 0:
        raise ValueError(f"layout image size must be positive, got {layout.image_size}")
    mask = np.zeros((height, width), dtype=bool)
    for box, _ in layout.objects:
        x0, y0, x1, y1 = box.pixel_bounds(width, height)
        mask[y0:y1, x0:x1] = True
    return mask


def mask_digest(mask: np.ndarray) -> str:
    """SHA-256 over the packed bit-plane, stable across runs."""
    header = f"{mask.shape[1]}x{mask.shape[0]}:".encode()
    return hashlib.sha256(header + np.packbits(mask).tobytes()).hexdigest()
