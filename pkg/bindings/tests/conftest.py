"""Standalone fixture corpus for the bindings tests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from objblur.imgio import save_png


def _image(seed: int, size: int = 128) -> np.ndarray:
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    for c in range(3):
        a, b = r.uniform(-1, 1, 2)
        img[:, :, c] = 120 + 50 * (a * xx + b * yy) / size
    for _ in range(5):
        x0, y0 = r.integers(0, size - 30, 2)
        img[y0:y0 + 25, x0:x0 + 25] = r.uniform(0, 255, 3)
    img += r.normal(0, 5, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


@dataclass
class Corpus:
    manifest: Path
    ids: list


@pytest.fixture(scope="session")
def corpus(tmp_path_factory) -> Corpus:
    root = tmp_path_factory.mktemp("bind_corpus")
    images_dir = root / "images"
    images_dir.mkdir()
    r = np.random.default_rng(1234)
    entries = []
    ids = []
    for i in range(8):
        image_id = f"img_{i:04d}"
        ids.append(image_id)
        save_png(_image(100 + i), images_dir / f"{image_id}.png")
        boxes = []
        for _ in range(int(r.integers(3, 9))):
            w, h = int(r.integers(20, 60)), int(r.integers(20, 60))
            x, y = int(r.integers(0, 128 - w)), int(r.integers(0, 128 - h))
            boxes.append([x, y, w, h])
        entries.append({
            "id": image_id,
            "file": f"images/{image_id}.png",
            "width": 128,
            "height": 128,
            "objects": [{"bbox": b, "category_id": 1} for b in boxes],
        })
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({
        "categories": [{"id": 1, "name": "thing"}],
        "images": entries,
    }))
    return Corpus(manifest, ids)


@pytest.fixture
def config_mapping(corpus, tmp_path) -> dict:
    return {
        "manifest": str(corpus.manifest),
        "out": str(tmp_path / "sink"),
        "schedule": "sin",
        "duration": 0.95,
        "variant": "objblur",
        "p_obj": 0.5,
        "start_res": 8,
        "steps": 6,
        "batch_size": 4,
        "seed": 0,
        "workers": 1,
    }
