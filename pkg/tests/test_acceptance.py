"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints an ``ACCEPTANCE <name>: PASS`` line on success, so a
verbose run doubles as the acceptance report.  Criteria marked with a
runtime budget assert it.
"""

from __future__ import annotations

import hashlib
import json
import time

import numpy as np

from objblur.cli import main as cli_main
from objblur.compositor import composite_objblur, decide_branch
from objblur.layouts import FilterRules, apply_filters, rasterize_mask, read_manifest
from objblur.pipeline import PipelineConfig, rng_stream, run_epochal
from objblur.resample import (
    blur,
    resize_bilinear_float,
    strength_to_resolution,
    to_float32,
    to_uint8,
)
from objblur.schedules import enumerate_families

from .conftest import textured_image
from .oracles import bilinear_reference, laplacian_energy, paste_loop_composite, quantize_reference


def ok(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


def corpus_config(corpus, **overrides) -> PipelineConfig:
    mapping = {
        "manifest": str(corpus.manifest),
        "schedule": "sin",
        "duration": 0.95,
        "variant": "objblur",
        "steps": 10,
        "batch_size": 16,
        "seed": 0,
        "workers": 1,
    }
    mapping.update(overrides)
    return PipelineConfig.from_mapping(mapping)


def source_digests(corpus) -> dict:
    return {image_id: hashlib.sha256(corpus.source_image(image_id).tobytes()).hexdigest()
            for image_id in corpus.ids}


def test_leak_free_terminal_state(corpus):
    """Every family x duration: samples at t >= d*T are byte-identical to sources."""
    t_start = time.perf_counter()
    sources = source_digests(corpus)
    steps = 10
    checked = 0
    for spec in enumerate_families():
        for duration in (0.7, 0.95, 1.0):
            config = corpus_config(
                corpus, schedule=spec.label(), duration=duration, steps=steps)
            terminal_from = duration * steps

            def check(sample):
                nonlocal checked
                if sample.provenance.step >= terminal_from - 1e-9:
                    assert sample.provenance.s == 0.0, (spec.label(), duration)
                    assert sample.provenance.image_sha256 == sources[sample.provenance.image_id], \
                        (spec.label(), duration, sample.provenance.step)
                    checked += 1

            report = run_epochal(config, check)
            assert report.skipped == 0
    elapsed = time.perf_counter() - t_start
    assert checked > 0
    assert elapsed < 60.0, f"leak-free sweep took {elapsed:.1f}s (budget 60s)"
    ok(f"leak-free terminal state ({checked} terminal samples, {elapsed:.1f}s)")


def test_strength_to_resolution_table():
    """Endpoint and midpoint values for 128/4 geometry, plus grid monotonicity."""
    assert strength_to_resolution(1.0, (128, 128), (4, 4)) == (4, 4)
    assert strength_to_resolution(0.0, (128, 128), (4, 4)) == (128, 128)
    assert strength_to_resolution(0.5, (128, 128), (4, 4)) == (66, 66)
    prev = (1 << 30, 1 << 30)
    for i in range(1001):
        cur = strength_to_resolution(i / 1000.0, (128, 128), (4, 4))
        assert cur[0] <= prev[0] and cur[1] <= prev[1]
        prev = cur
    ok("resolution mapping table + 1001-point monotonicity")


def test_resampler_matches_reference_oracle():
    """500 random images up to 64x64: float32-exact and uint8-exact."""
    t_start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(500):
        w, h, out_w, out_h = (int(rng.integers(1, 65)) for _ in range(4))
        channels = int(rng.choice([1, 3]))
        img = rng.integers(0, 256, (h, w, channels), np.uint8)
        f = to_float32(img)
        got = resize_bilinear_float(f, out_w, out_h)
        want = bilinear_reference(f, out_w, out_h)
        assert np.array_equal(got, want), (w, h, out_w, out_h)
        assert np.array_equal(to_uint8(got), quantize_reference(want))
    elapsed = time.perf_counter() - t_start
    assert elapsed < 30.0, f"oracle sweep took {elapsed:.1f}s (budget 30s)"
    ok(f"resampler oracle, 500 images ({elapsed:.1f}s)")


def test_composite_partition_exactness():
    """1,000 random (image, mask, branch) triples select pixels exactly."""
    rng = np.random.default_rng(7)
    for i in range(1000):
        h, w = int(rng.integers(4, 33)), int(rng.integers(4, 33))
        hr = rng.integers(0, 256, (h, w, 3), np.uint8)
        lr = rng.integers(0, 256, (h, w, 3), np.uint8)
        mask = rng.random((h, w)) < rng.uniform(0.1, 0.9)
        blur_objects = bool(rng.integers(0, 2))
        out = composite_objblur(hr, lr, mask, blur_objects)
        inside, outside = (lr, hr) if blur_objects else (hr, lr)
        assert np.array_equal(out[mask], inside[mask])
        assert np.array_equal(out[~mask], outside[~mask])
    hr = textured_image(1)
    lr = blur(hr, 0.8, (8, 8))
    ones = np.ones(hr.shape[:2], bool)
    zeros = np.zeros(hr.shape[:2], bool)
    assert np.array_equal(composite_objblur(hr, lr, ones, True), lr)
    assert np.array_equal(composite_objblur(hr, lr, zeros, True), hr)
    ok("composite partition exactness, 1000 triples + degenerate masks")


def test_paste_loop_equivalence(corpus):
    """Per-object paste loop equals the rasterized-mask composite on all fixtures."""
    manifest = read_manifest(corpus.manifest)
    for layout in manifest.layouts:
        hr = corpus.source_image(layout.image_id)
        boxes = [(b.x, b.y, b.w, b.h) for b, _ in layout.objects]
        mask = rasterize_mask(layout)
        lr = blur(hr, 0.9, (8, 8))
        for blur_objects in (True, False):
            via_mask = composite_objblur(hr, lr, mask, blur_objects)
            via_loop = paste_loop_composite(hr, lr, boxes, blur_objects)
            assert np.array_equal(via_mask, via_loop), layout.image_id
    ok(f"paste-loop equivalence on {len(manifest.layouts)} fixtures")


def test_branch_statistics():
    """10 seeds x 1,000 draws at p=0.5: pooled frequency inside [0.48, 0.52]."""
    hits = 0
    total = 0
    for seed in range(10):
        for t in range(1000):
            draw = float(rng_stream(seed, "branch", t, "img_0000").random())
            hits += decide_branch(draw, 0.5).blur_objects
            total += 1
    frequency = hits / total
    assert 0.48 <= frequency <= 0.52, frequency
    ok(f"branch statistics (frequency {frequency:.4f})")


def test_schedule_curves(tmp_path, capsys):
    """All ten CSVs: endpoints, non-increase, and sin symmetry within 1e-12."""
    code = cli_main([
        "schedule", "--family", "all", "--points", "201", "--steps", "200",
        "--duration", "1.0", "--out-dir", str(tmp_path),
    ])
    capsys.readouterr()
    assert code == 0
    files = sorted(tmp_path.glob("schedule_*.csv"))
    assert len(files) == 10
    for path in files:
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        s_values = [float(r[2]) for r in rows]
        is_none = path.name == "schedule_none.csv"
        assert s_values[0] == (0.0 if is_none else 1.0), path.name
        assert s_values[-1] == 0.0, path.name
        assert all(b <= a for a, b in zip(s_values, s_values[1:])), path.name
        if path.name == "schedule_sin.csv":
            for i in range(len(s_values)):
                total = s_values[i] + s_values[len(s_values) - 1 - i]
                assert abs(total - 1.0) < 1e-12
    ok("schedule curves, 10 families")


def test_high_frequency_monotonicity():
    """20 natural images: Laplacian energy non-increasing in s with 1% slack."""
    for i in range(20):
        img = textured_image(4000 + i)
        e0 = laplacian_energy(img)
        energies = [laplacian_energy(blur(img, k / 10.0, (8, 8))) for k in range(11)]
        for a, b in zip(energies, energies[1:]):
            assert b <= a + 0.01 * e0, (i, energies)
    ok("high-frequency monotonicity, 20 images")


def test_determinism_and_parallel_invariance(corpus):
    """Digests identical across repeated runs and across workers in {1, 4}."""
    def run_digest(workers: int) -> str:
        config = corpus_config(corpus, steps=6, workers=workers)
        rolling = hashlib.sha256()
        run_epochal(config, lambda s: rolling.update(s.provenance.image_sha256.encode()))
        return rolling.hexdigest()

    first = run_digest(1)
    second = run_digest(1)
    pooled = run_digest(4)
    assert first == second
    assert first == pooled
    ok(f"determinism & parallel invariance (digest {first[:12]})")


def test_throughput_floor(corpus, capsys):
    """At least 200 objblur samples/second on one worker, via the bench command."""
    code = cli_main([
        "bench", "--manifest", str(corpus.manifest), "--variant", "objblur",
        "--steps", "10", "--batch-size", "16", "--workers", "1", "--seconds", "2",
    ])
    stdout = capsys.readouterr().out
    assert code == 0
    report = json.loads(stdout.splitlines()[-1])
    rate = report["single_worker"]["samples_per_second"]
    assert rate >= 200.0, f"single-worker rate {rate:.0f}/s below 200/s floor"
    ok(f"throughput floor ({rate:.0f} samples/s single worker)")


def test_filter_rules_remove_planted_violations(tmp_path):
    """The 2% area rule and 3..8 count rule remove exactly the planted cases."""
    def entry(image_id, boxes):
        return {"id": image_id, "file": f"{image_id}.png", "width": 128, "height": 128,
                "objects": [{"bbox": list(b), "category_id": 1} for b in boxes]}

    good = [(8, 8, 40, 40), (56, 8, 40, 40), (8, 56, 40, 40)]
    planted = {
        "undersized": entry("undersized", good + [(0, 0, 16, 16)]),   # 0.0156 < 0.02
        "too_many": entry("too_many", [(i * 13, 0, 24, 24) for i in range(9)]),
        "too_few": entry("too_few", [(8, 8, 40, 40), (56, 8, 40, 40)]),
        "clean": entry("clean", good),
    }
    path = tmp_path / "planted.json"
    path.write_text(json.dumps({
        "categories": [{"id": 1, "name": "thing"}],
        "images": list(planted.values()),
    }))

    manifest = read_manifest(path)
    filtered, stats = apply_filters(manifest.layouts, FilterRules())
    survivors = {l.image_id for l in filtered}
    assert survivors == {"undersized", "clean"}
    assert stats.boxes_removed_area == 1
    assert stats.layouts_dropped_count == 2
    undersized = next(l for l in filtered if l.image_id == "undersized")
    assert len(undersized.objects) == 3
    ok("filter rules remove exactly the planted violations")
