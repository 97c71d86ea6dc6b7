"""In-process iterator over the augmentation pipeline for training loops.

``open_pipeline(config)`` validates a CLI-style config mapping, indexes the
dataset, and returns a :class:`BoundPipeline` that yields one batch per
training step without touching the filesystem sink.  Batches carry the raw
``(H, W, C)`` uint8 buffers (the pipeline's own arrays, no copies), the
untouched layout, and the provenance record, so a host framework decides
its own normalization.

Iteration order and bytes are identical to what the CLI writes for the
same config and seed; the provenance's ``image_sha256`` fields line up
one-to-one with the CLI sink's ``provenance.jsonl``.

A handle is single-consumer: concurrent ``next_batch`` calls on one handle
are a usage error.  Two handles over the same config produce identical
streams regardless of interleaving.
"""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from objblur.layouts import Layout
from objblur.pipeline import (
    AugmentedSample,
    Dataset,
    PipelineConfig,
    Provenance,
    load_dataset,
    stream_samples,
)

__all__ = ["BoundPipeline", "open_pipeline", "next_batch"]
__version__ = "0.1.0"

Batch = list[tuple[np.ndarray, Layout, Provenance]]

_DONE = object()


class BoundPipeline:
    """Iterator over augmented batches, one per training step."""

    def __init__(self, config: PipelineConfig | Mapping):
        if not isinstance(config, PipelineConfig):
            config = PipelineConfig.from_mapping(dict(config))
        self._config = config
        # open-time validation: manifest parse and filter failures surface
        # here, not on the first next_batch
        self._dataset: Dataset = load_dataset(config)
        self._step = 0
        self._gen: Iterator[AugmentedSample] | None = None
        self._peek = None

    @property
    def step(self) -> int:
        return self._step

    @property
    def total_steps(self) -> int:
        return self._config.steps

    def describe(self) -> dict:
        """The resolved config mapping, equal to the CLI's printed config."""
        return self._config.describe()

    def __iter__(self) -> "BoundPipeline":
        return self

    def __next__(self) -> Batch:
        if self._step >= self._config.steps:
            raise StopIteration
        if self._gen is None:
            self._gen = stream_samples(self._config, dataset=self._dataset)
            self._peek = next(self._gen, _DONE)
        batch: Batch = []
        while self._peek is not _DONE and self._peek.provenance.step == self._step:
            sample = self._peek
            batch.append((sample.image, sample.layout, sample.provenance))
            self._peek = next(self._gen, _DONE)
        self._step += 1
        return batch

    def next_batch(self) -> Batch:
        return next(self)


def open_pipeline(config: Mapping) -> BoundPipeline:
    """Validate a config mapping and return a batch iterator over it."""
    return BoundPipeline(config)


def next_batch(bp: BoundPipeline) -> Batch:
    """Advance one step; raises StopIteration when the schedule is exhausted."""
    return bp.next_batch()
