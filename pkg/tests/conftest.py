"""Shared fixtures: the synthetic 64-image corpus and image generators."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from objblur.imgio import load_image, save_png

CORPUS_SIZE = 64
IMAGE_SIZE = 128


def textured_image(seed: int, size: int = IMAGE_SIZE) -> np.ndarray:
    """Natural-ish test image: gradients, hard-edged shapes, mild noise."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for c in range(3):
        a, b = r.uniform(-1, 1, 2)
        img[:, :, c] = 120 + 50 * (a * xx + b * yy) / size
    for _ in range(int(r.integers(4, 9))):
        cx, cy = r.uniform(5, size - 5, 2)
        rad = r.uniform(8, 30)
        col = r.uniform(0, 255, 3)
        m = ((xx - cx) ** 2 + (yy - cy) ** 2) < rad * rad
        img[m] = 0.3 * img[m] + 0.7 * col
    img += r.normal(0, 6, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def smooth_image(seed: int, size: int = IMAGE_SIZE) -> np.ndarray:
    """Low-frequency test image: gradients plus wide soft blobs, no noise."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for c in range(3):
        a, b = r.uniform(-1, 1, 2)
        img[:, :, c] = 120 + 45 * (a * xx + b * yy) / size
    for _ in range(int(r.integers(2, 5))):
        cx, cy = r.uniform(0, size, 2)
        rad = r.uniform(40, 80)
        col = r.uniform(40, 215, 3)
        d2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / (rad * rad)
        w = np.exp(-d2)[:, :, None]
        img = img * (1 - 0.7 * w) + col * 0.7 * w
    return np.clip(img, 0, 255).astype(np.uint8)


def random_boxes(r: np.random.Generator, count: int, size: int = IMAGE_SIZE) -> list:
    """Boxes that all pass the 2% area rule; roughly half get fractional coords."""
    boxes = []
    for _ in range(count):
        w = float(r.integers(20, 61))
        h = float(r.integers(20, 61))
        x = float(r.uniform(0, size - w))
        y = float(r.uniform(0, size - h))
        if r.random() < 0.5:
            x, y = round(x), round(y)
        boxes.append([round(x, 2), round(y, 2), w, h])
    return boxes


@dataclass
class Corpus:
    root: Path
    manifest: Path
    images_dir: Path
    ids: list

    def source_image(self, image_id: str) -> np.ndarray:
        return load_image(self.images_dir / f"{image_id}.png")


def build_corpus(root: Path, count: int = CORPUS_SIZE, seed: int = 9000,
                 size: int = IMAGE_SIZE, objects=(3, 8)) -> Corpus:
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    r = np.random.default_rng(seed)
    images = []
    ids = []
    for i in range(count):
        image_id = f"img_{i:04d}"
        ids.append(image_id)
        save_png(textured_image(seed + i, size), images_dir / f"{image_id}.png")
        n_obj = int(r.integers(objects[0], objects[1] + 1))
        images.append({
            "id": image_id,
            "file": f"images/{image_id}.png",
            "width": size,
            "height": size,
            "objects": [{"bbox": b, "category_id": 1 + int(r.integers(0, 3))}
                        for b in random_boxes(r, n_obj, size)],
        })
    manifest = {
        "categories": [{"id": 1, "name": "alpha"}, {"id": 2, "name": "beta"},
                       {"id": 3, "name": "gamma"}],
        "images": images,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))
    return Corpus(root, manifest_path, images_dir, ids)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> Corpus:
    return build_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> Corpus:
    """16 images; cheaper for pipeline and CLI round-trips."""
    return build_corpus(tmp_path_factory.mktemp("small_corpus"), count=16, seed=500)
