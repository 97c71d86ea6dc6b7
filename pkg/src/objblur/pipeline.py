"""Deterministic augmentation pipeline: tickets, RNG streams, workers, sinks.

Every random decision is drawn from a counter-based generator keyed by
``(seed, purpose, step, image_id)``, so a sample's bytes depend only on the
configuration and the manifest, never on worker scheduling.  The delivered
stream is ordered by ``(step, within-batch index)`` and is byte-identical
for any worker count.

Stream purposes:

* ``epoch``    per-epoch dataset permutation, keyed by epoch index
* ``branch``   object-vs-background uniform, keyed by (step, image_id)
* ``patch``    cutblur patch geometry, keyed by (step, image_id)
* ``shuffle``  randmask batch mask permutation, keyed by step
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import resource
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Mapping

import numpy as np

from .compositor import (
    BlurPolicy,
    composite_cutblur,
    composite_fullblur,
    composite_objblur,
    decide_branch,
    draw_cutblur_patch,
)
from .imgio import encode_png, load_image, save_png
from .layouts import FilterRules, FilterStats, Layout, apply_filters, mask_digest, rasterize_mask, read_manifest
from .resample import blur
from .schedules import ScheduleSpec, TrainClock, parse_spec, strength

log = logging.getLogger(__name__)

__all__ = [
    "PipelineConfig",
    "PipelineError",
    "SampleTicket",
    "Provenance",
    "AugmentedSample",
    "RunReport",
    "ThroughputReport",
    "DirectorySink",
    "Dataset",
    "load_dataset",
    "rng_stream",
    "stream_samples",
    "run_epochal",
    "preview",
    "bench",
]


class PipelineError(RuntimeError):
    """Configuration or dataset problem that prevents a run from starting."""


def rng_stream(seed: int, purpose: str, *parts) -> np.random.Generator:
    """Independent counter-based generator for one (purpose, context) tuple.

    The Philox key is a hash of the full context, so streams are stable
    across runs and independent of worker assignment.
    """
    material = "|".join([str(seed), purpose, *map(str, parts)]).encode()
    key = int.from_bytes(hashlib.sha256(material).digest()[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class PipelineConfig:
    """Fully-resolved run configuration; see :meth:`from_mapping` for the JSON keys."""

    manifest: Path
    images: Path | None = None
    out: Path | None = None
    schedule: ScheduleSpec = field(default_factory=lambda: ScheduleSpec("sin"))
    policy: BlurPolicy = field(default_factory=BlurPolicy)
    rules: FilterRules = field(default_factory=FilterRules)
    steps: int = 200
    batch_size: int = 8
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise PipelineError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise PipelineError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.workers < 1:
            raise PipelineError(f"workers must be >= 1, got {self.workers}")

    @classmethod
    def from_mapping(cls, m: Mapping) -> "PipelineConfig":
        """Build a config from the CLI/JSON mapping; unknown keys are rejected."""
        known = {"manifest", "images", "out", "schedule", "duration", "variant",
                 "p_obj", "start_res", "cutblur_area", "steps", "batch_size",
                 "seed", "workers", "filter"}
        unknown = set(m) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        if "manifest" not in m or m["manifest"] is None:
            raise PipelineError("config requires a manifest path")

        start_res = m.get("start_res", 8)
        if isinstance(start_res, (int, float)):
            start = (int(start_res), int(start_res))
        else:
            start = (int(start_res[0]), int(start_res[1]))
        cut = m.get("cutblur_area", (0.1, 0.5))
        policy = BlurPolicy(
            variant=str(m.get("variant", "objblur")),
            p_obj=float(m.get("p_obj", 0.5)),
            start=start,
            cutblur_area=(float(cut[0]), float(cut[1])),
        )
        try:
            schedule = parse_spec(str(m.get("schedule", "sin")),
                                  duration=float(m.get("duration", 0.95)))
        except ValueError as e:
            raise PipelineError(str(e)) from e

        fm = dict(m.get("filter") or {})
        rules = FilterRules(
            min_area_frac=float(fm.get("min_area_frac", 0.02)),
            min_objects=int(fm.get("min_objects", 3)),
            max_objects=int(fm.get("max_objects", 8)),
            excluded_class_ids=frozenset(int(c) for c in fm.get("excluded_class_ids", ())),
        )
        return cls(
            manifest=Path(m["manifest"]),
            images=Path(m["images"]) if m.get("images") else None,
            out=Path(m["out"]) if m.get("out") else None,
            schedule=schedule,
            policy=policy,
            rules=rules,
            steps=int(m.get("steps", 200)),
            batch_size=int(m.get("batch_size", 8)),
            seed=int(m.get("seed", 0)),
            workers=int(m.get("workers", 1)),
        )

    def describe(self) -> dict:
        """Canonical mapping of the resolved configuration.

        ``from_mapping(describe())`` reproduces this config exactly, and the
        CLI prints this mapping verbatim before doing any work.
        """
        return {
            "manifest": str(Path(self.manifest).resolve()),
            "images": str(Path(self.images).resolve()) if self.images else None,
            "out": str(Path(self.out).resolve()) if self.out else None,
            "schedule": self.schedule.label(),
            "duration": self.schedule.duration,
            "variant": self.policy.variant,
            "p_obj": self.policy.p_obj,
            "start_res": list(self.policy.start),
            "cutblur_area": list(self.policy.cutblur_area),
            "steps": self.steps,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "workers": self.workers,
            "filter": {
                "min_area_frac": self.rules.min_area_frac,
                "min_objects": self.rules.min_objects,
                "max_objects": self.rules.max_objects,
                "excluded_class_ids": sorted(self.rules.excluded_class_ids),
            },
        }


@dataclass(frozen=True)
class SampleTicket:
    """One unit of work: which image at which step, and whose mask it wears."""

    step: int
    index: int
    image_id: str
    mask_source_id: str


@dataclass(frozen=True)
class Provenance:
    """Everything needed to reproduce one output image from its source."""

    image_id: str
    step: int
    s: float
    variant: str
    branch: str
    rng_draw: float | None
    mask_sha256: str | None
    patch: tuple[float, float, float, float] | None
    image_sha256: str

    def to_record(self) -> dict:
        return {
            "image_id": self.image_id,
            "step": self.step,
            "s": self.s,
            "variant": self.variant,
            "branch": self.branch,
            "rng_draw": self.rng_draw,
            "mask_sha256": self.mask_sha256,
            "patch": list(self.patch) if self.patch else None,
            "image_sha256": self.image_sha256,
        }


@dataclass(frozen=True)
class AugmentedSample:
    image: np.ndarray
    layout: Layout
    provenance: Provenance


@dataclass
class Dataset:
    """Filtered layouts plus resolved image paths, in manifest order."""

    layouts: list[Layout]
    paths: dict[str, Path]
    filter_stats: FilterStats

    def __post_init__(self):
        self.by_id = {layout.image_id: layout for layout in self.layouts}

    def __len__(self) -> int:
        return len(self.layouts)


def load_dataset(config: PipelineConfig) -> Dataset:
    """Read and filter the manifest; fails fast when nothing survives."""
    manifest = read_manifest(config.manifest)
    filtered, stats = apply_filters(manifest.layouts, config.rules)
    if not filtered:
        raise PipelineError(
            f"no layouts survive filtering ({len(manifest.layouts)} in manifest)")
    paths = {l.image_id: manifest.image_path(l.image_id, root=config.images)
             for l in filtered}
    return Dataset(filtered, paths, stats)


def _effective_spec(config: PipelineConfig, dataset: Dataset) -> ScheduleSpec:
    # pow2 stage geometry follows the corpus: start width from the policy,
    # full width from the first image.
    return replace(config.schedule,
                   start_res=config.policy.start[0],
                   full_res=dataset.layouts[0].image_size[0])


def steps_per_epoch(n_layouts: int, batch_size: int) -> int:
    return math.ceil(n_layouts / batch_size)


def plan_step(config: PipelineConfig, ids: list[str], t: int) -> list[SampleTicket]:
    """Tickets for step ``t``: epoch-shuffled batch plus mask assignment."""
    per_epoch = steps_per_epoch(len(ids), config.batch_size)
    epoch, slot = divmod(t, per_epoch)
    order = rng_stream(config.seed, "epoch", epoch).permutation(len(ids))
    chosen = order[slot * config.batch_size:(slot + 1) * config.batch_size]
    batch = [ids[i] for i in chosen]
    mask_ids = batch
    if config.policy.variant == "randmask":
        perm = rng_stream(config.seed, "shuffle", t).permutation(len(batch))
        mask_ids = [batch[j] for j in perm]
    return [SampleTicket(t, i, batch[i], mask_ids[i]) for i in range(len(batch))]


@dataclass
class _RunContext:
    config: PipelineConfig
    dataset: Dataset
    spec: ScheduleSpec


def _time_stage(timings: dict | None, stage: str, t0: float) -> float:
    t1 = time.perf_counter()
    if timings is not None:
        total, count = timings.get(stage, (0.0, 0))
        timings[stage] = (total + (t1 - t0), count + 1)
    return t1


def _process_ticket(ctx: _RunContext, ticket: SampleTicket,
                    timings: dict | None = None) -> AugmentedSample:
    config = ctx.config
    policy = config.policy
    layout = ctx.dataset.by_id[ticket.image_id]

    t0 = time.perf_counter()
    hr = load_image(ctx.dataset.paths[ticket.image_id])
    t0 = _time_stage(timings, "decode", t0)

    s = strength(ctx.spec, TrainClock(ticket.step, config.steps))
    variant = policy.variant
    rng_draw = None
    mask_sha = None
    patch_rec = None

    if variant == "none":
        out = hr
        branch = "clean"
        _time_stage(timings, "blur", t0)
        t0 = time.perf_counter()
    else:
        lr = blur(hr, s, policy.start)
        t0 = _time_stage(timings, "blur", t0)
        if variant == "fullblur":
            out = composite_fullblur(hr, lr)
            branch = "full"
        elif variant == "cutblur":
            patch = draw_cutblur_patch(
                rng_stream(config.seed, "patch", ticket.step, ticket.image_id),
                (hr.shape[1], hr.shape[0]), policy.cutblur_area)
            out = composite_cutblur(hr, lr, patch)
            branch = "patch"
            patch_rec = (patch.x, patch.y, patch.w, patch.h)
        else:
            # objblur, or randmask wearing another layout's mask
            mask = rasterize_mask(ctx.dataset.by_id[ticket.mask_source_id])
            draw = float(rng_stream(config.seed, "branch", ticket.step,
                                    ticket.image_id).random())
            decision = decide_branch(draw, policy.p_obj)
            out = composite_objblur(hr, lr, mask, decision.blur_objects)
            branch = "obj" if decision.blur_objects else "bg"
            rng_draw = decision.rng_draw
            mask_sha = mask_digest(mask)
    t0 = _time_stage(timings, "composite", t0)

    prov = Provenance(
        image_id=ticket.image_id,
        step=ticket.step,
        s=s,
        variant=variant,
        branch=branch,
        rng_draw=rng_draw,
        mask_sha256=mask_sha,
        patch=patch_rec,
        image_sha256=hashlib.sha256(out.tobytes()).hexdigest(),
    )
    return AugmentedSample(image=out, layout=layout, provenance=prov)


# Pooled submission granularity: steps batched per map call, and tickets
# per pickled chunk.  Two steps in flight keeps workers busy across step
# boundaries without buffering unbounded results.
_POOL_WINDOW = 2


def _pool_chunk(n_tickets: int, workers: int) -> int:
    return max(1, n_tickets // (workers * 2))


# Worker-process state, built once per worker by the pool initializer.
_WORKER_CTX: _RunContext | None = None


def _worker_init(config_map: dict) -> None:
    global _WORKER_CTX
    config = PipelineConfig.from_mapping(config_map)
    dataset = load_dataset(config)
    _WORKER_CTX = _RunContext(config, dataset, _effective_spec(config, dataset))


def _worker_run(ticket: SampleTicket):
    try:
        return "ok", _process_ticket(_WORKER_CTX, ticket)
    except Exception as e:  # rot tolerance: one bad sample never kills a run
        return "skip", {"image_id": ticket.image_id, "step": ticket.step, "error": str(e)}


def _worker_run_encoded(ticket: SampleTicket):
    """Bench variant: encode in the worker, return only the byte count."""
    try:
        sample = _process_ticket(_WORKER_CTX, ticket)
        return "ok", len(encode_png(sample.image))
    except Exception as e:
        return "skip", {"image_id": ticket.image_id, "step": ticket.step, "error": str(e)}


def stream_samples(config: PipelineConfig,
                   on_skip: Callable[[dict], None] | None = None,
                   dataset: Dataset | None = None) -> Iterator[AugmentedSample]:
    """Yield augmented samples for steps 0..steps-1 in deterministic order.

    Skipped samples (missing or undecodable images) are reported through
    ``on_skip`` and never interrupt the stream.
    """
    if dataset is None:
        dataset = load_dataset(config)
    ctx = _RunContext(config, dataset, _effective_spec(config, dataset))
    ids = [l.image_id for l in dataset.layouts]

    def skip(info: dict) -> None:
        log.error("skipping %s at step %d: %s",
                  info["image_id"], info["step"], info["error"])
        if on_skip is not None:
            on_skip(info)

    if config.workers == 1:
        for t in range(config.steps):
            for ticket in plan_step(config, ids, t):
                try:
                    sample = _process_ticket(ctx, ticket)
                except Exception as e:
                    skip({"image_id": ticket.image_id, "step": t, "error": str(e)})
                    continue
                yield sample
        return

    with ProcessPoolExecutor(max_workers=config.workers,
                             initializer=_worker_init,
                             initargs=(config.describe(),)) as pool:
        for first in range(0, config.steps, _POOL_WINDOW):
            tickets = [ticket
                       for t in range(first, min(first + _POOL_WINDOW, config.steps))
                       for ticket in plan_step(config, ids, t)]
            for status, payload in pool.map(_worker_run, tickets,
                                            chunksize=_pool_chunk(len(tickets), config.workers)):
                if status == "ok":
                    yield payload
                else:
                    skip(payload)


@dataclass
class RunReport:
    """Counts and rates for one full run."""

    steps: int
    delivered: int = 0
    skipped: int = 0
    branch_counts: dict = field(default_factory=dict)
    skip_errors: list = field(default_factory=list)
    wall_seconds: float = 0.0
    samples_per_second: float = 0.0

    def to_dict(self) -> dict:
        return {
            "steps": self.steps,
            "delivered": self.delivered,
            "skipped": self.skipped,
            "branch_counts": dict(self.branch_counts),
            "wall_seconds": self.wall_seconds,
            "samples_per_second": self.samples_per_second,
        }


def run_epochal(config: PipelineConfig,
                consumer: Callable[[AugmentedSample], None]) -> RunReport:
    """Run the full schedule, delivering every sample to ``consumer`` in order."""
    report = RunReport(steps=config.steps)

    def on_skip(info: dict) -> None:
        report.skipped += 1
        report.skip_errors.append(info)

    t0 = time.perf_counter()
    for sample in stream_samples(config, on_skip=on_skip):
        consumer(sample)
        report.delivered += 1
        b = sample.provenance.branch
        report.branch_counts[b] = report.branch_counts.get(b, 0) + 1
    report.wall_seconds = time.perf_counter() - t0
    if report.wall_seconds > 0:
        report.samples_per_second = report.delivered / report.wall_seconds
    return report


def preview(config: PipelineConfig, image_id: str,
            t_list: list[int]) -> list[AugmentedSample]:
    """Both branches of one image at the requested steps, consuming no RNG.

    For each step this emits the objects-blurred and background-blurred
    composites in that order, regardless of the configured variant.
    """
    dataset = load_dataset(config)
    if image_id not in dataset.by_id:
        raise PipelineError(f"unknown image id '{image_id}'")
    spec = _effective_spec(config, dataset)
    layout = dataset.by_id[image_id]
    hr = load_image(dataset.paths[image_id])
    mask = rasterize_mask(layout)
    mask_sha = mask_digest(mask)

    samples = []
    for t in t_list:
        s = strength(spec, TrainClock(t, config.steps))
        lr = blur(hr, s, config.policy.start)
        for blur_objects in (True, False):
            out = composite_objblur(hr, lr, mask, blur_objects)
            prov = Provenance(
                image_id=image_id, step=t, s=s, variant=config.policy.variant,
                branch="obj" if blur_objects else "bg", rng_draw=None,
                mask_sha256=mask_sha, patch=None,
                image_sha256=hashlib.sha256(out.tobytes()).hexdigest(),
            )
            samples.append(AugmentedSample(out, layout, prov))
    return samples


@dataclass
class ThroughputReport:
    """Bench results: overall rates plus per-stage means for one worker."""

    duration_seconds: float
    samples_single: int = 0
    seconds_single: float = 0.0
    samples_per_second_single: float = 0.0
    workers: int = 1
    samples_multi: int = 0
    seconds_multi: float = 0.0
    samples_per_second_multi: float = 0.0
    stage_ms: dict = field(default_factory=dict)
    peak_rss_mb: float = 0.0

    def to_dict(self) -> dict:
        return {
            "duration_seconds": self.duration_seconds,
            "single_worker": {
                "samples": self.samples_single,
                "seconds": self.seconds_single,
                "samples_per_second": self.samples_per_second_single,
            },
            "multi_worker": {
                "workers": self.workers,
                "samples": self.samples_multi,
                "seconds": self.seconds_multi,
                "samples_per_second": self.samples_per_second_multi,
            },
            "stage_ms": dict(self.stage_ms),
            "peak_rss_mb": self.peak_rss_mb,
        }


def _peak_rss_mb() -> float:
    rss = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    rss += resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    return rss / 1024.0


def bench(config: PipelineConfig, duration: float) -> ThroughputReport:
    """Measure end-to-end sample production (decode, blur, composite, encode).

    Runs a single-worker timed pass and, when ``config.workers > 1``, a
    pooled pass at the configured worker count.  A non-positive duration
    returns an empty report.
    """
    report = ThroughputReport(duration_seconds=max(duration, 0.0), workers=config.workers)
    if duration <= 0:
        return report

    dataset = load_dataset(config)
    ctx = _RunContext(config, dataset, _effective_spec(config, dataset))
    ids = [l.image_id for l in dataset.layouts]

    timings: dict = {}
    produced = 0
    start = time.perf_counter()
    t = 0
    while time.perf_counter() - start < duration:
        for ticket in plan_step(config, ids, t % config.steps):
            try:
                sample = _process_ticket(ctx, ticket, timings)
            except Exception:
                continue
            t0 = time.perf_counter()
            encode_png(sample.image)
            _time_stage(timings, "encode", t0)
            produced += 1
        t += 1
    report.seconds_single = time.perf_counter() - start
    report.samples_single = produced
    report.samples_per_second_single = produced / report.seconds_single
    report.stage_ms = {
        stage: 1000.0 * total / count for stage, (total, count) in sorted(timings.items())
    }

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers,
                                 initializer=_worker_init,
                                 initargs=(config.describe(),)) as pool:
            # warm the pool so initializer cost stays out of the timing
            list(pool.map(_worker_run_encoded, plan_step(config, ids, 0)))
            produced = 0
            start = time.perf_counter()
            t = 0
            while time.perf_counter() - start < duration:
                tickets = [ticket for w in range(_POOL_WINDOW)
                           for ticket in plan_step(config, ids, (t + w) % config.steps)]
                for status, _ in pool.map(_worker_run_encoded, tickets,
                                          chunksize=_pool_chunk(len(tickets), config.workers)):
                    if status == "ok":
                        produced += 1
                t += _POOL_WINDOW
            report.seconds_multi = time.perf_counter() - start
            report.samples_multi = produced
            report.samples_per_second_multi = produced / report.seconds_multi
    else:
        report.samples_multi = report.samples_single
        report.seconds_multi = report.seconds_single
        report.samples_per_second_multi = report.samples_per_second_single

    report.peak_rss_mb = _peak_rss_mb()
    return report


class DirectorySink:
    """Write samples as PNGs plus a JSON-lines provenance log.

    Files are named ``{image_id}_t{step}_{branch}.png``; each provenance
    record also carries the SHA-256 of the raw pixel bytes, which defines
    the stream digest consumers compare against.
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._log = open(self.directory / "provenance.jsonl", "w", encoding="utf-8")

    def __call__(self, sample: AugmentedSample) -> None:
        prov = sample.provenance
        name = f"{prov.image_id}_t{prov.step}_{prov.branch}.png"
        save_png(sample.image, self.directory / name)
        self._log.write(json.dumps(prov.to_record(), sort_keys=True) + "\n")

    def close(self) -> None:
        self._log.close()

    def __enter__(self) -> "DirectorySink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
