"""Blur-strength schedules: families, truncation, and the ablation set.

A schedule maps training progress to a blur strength in [0, 1], starting at
1 (strongest blur) and reaching exactly 0 at the end of its active window.
The active window is ``duration * total_steps``; past it the strength stays
0 so the remainder of training fine-tunes on clean samples.

Families
--------
``none``      constant 0 (baseline, no curriculum)
``linear``    1 - tau
``step:n``    n equal-width descending stages
``pow2``      resolution-doubling stages, each twice as long as the last
``sin``       cosine ramp (1 + cos(pi * tau)) / 2
``exp:k``     (e^{k (1 - tau)} - 1) / (e^k - 1); k < 0 front-loads the
              strong-blur phase, k > 0 back-loads it

``pow2`` is resolution-aware: its stage count is the number of doublings
between ``start_res`` and ``full_res``, and each stage's strength is the one
whose intermediate resolution equals that stage's size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "ScheduleSpec",
    "TrainClock",
    "FAMILIES",
    "strength",
    "strength_at",
    "truncated_progress",
    "enumerate_families",
    "parse_spec",
]

FAMILIES = ("none", "linear", "step", "pow2", "sin", "exp")

# Relative guard so t >= duration*total lands exactly on strength 0 even
# when duration*total is not representable (e.g. 0.7 * 30).
_TAU_EPS = 1e-12


@dataclass(frozen=True)
class ScheduleSpec:
    """One schedule configuration.

    ``stages`` is the stage count for the step family; ``rate`` is the
    exponent k for the exp family; ``full_res``/``start_res`` are the pow2
    geometry.  ``duration`` is the active fraction of total steps.
    """

    family: str
    stages: int = 0
    rate: float = 0.0
    duration: float = 0.95
    full_res: int = 128
    start_res: int = 8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown schedule family '{self.family}'")
        if self.family == "step" and self.stages < 2:
            raise ValueError(f"step schedule requires stages >= 2, got {self.stages}")
        if self.family == "exp" and self.rate == 0.0:
            raise ValueError("exp schedule requires a nonzero rate")
        if not 0.0 < self.duration <= 1.0:
            raise ValueError(f"duration must be in (0, 1], got {self.duration}")
        if not 1 <= self.start_res <= self.full_res:
            raise ValueError(
                f"pow2 geometry requires 1 <= start_res <= full_res, "
                f"got {self.start_res}/{self.full_res}")

    def label(self) -> str:
        """Compact spec string accepted by :func:`parse_spec`."""
        if self.family == "step":
            return f"step:{self.stages}"
        if self.family == "exp":
            return f"exp:{self.rate}"
        return self.family


@dataclass(frozen=True)
class TrainClock:
    """Current step ``t`` within a run of ``total`` steps."""

    t: int
    total: int

    def __post_init__(self):
        if self.total < 1:
            raise ValueError(f"total steps must be >= 1, got {self.total}")
        if not 0 <= self.t <= self.total:
            raise ValueError(f"step {self.t} outside [0, {self.total}]")


def parse_spec(text: str, **overrides) -> ScheduleSpec:
    """Parse a compact spec string: none, linear, step:4, pow2, sin, exp:-5.0."""
    name, _, arg = text.strip().partition(":")
    if name == "step":
        if not arg:
            raise ValueError("step schedule needs a stage count, e.g. 'step:4'")
        return ScheduleSpec("step", stages=int(arg), **overrides)
    if name == "exp":
        if not arg:
            raise ValueError("exp schedule needs a rate, e.g. 'exp:-5.0'")
        return ScheduleSpec("exp", rate=float(arg), **overrides)
    if arg or name not in FAMILIES:
        raise ValueError(f"unknown schedule spec '{text}'")
    return ScheduleSpec(name, **overrides)


def truncated_progress(t: float, total: float, duration: float) -> float:
    """Normalized progress through the active window, clamped to [0, 1]."""
    active = duration * total
    x = min(float(t), active) / active
    if x >= 1.0 - _TAU_EPS:
        return 1.0
    return max(x, 0.0)


def _pow2_strength(tau: float, full: int, start: int) -> float:
    levels = int(math.floor(math.log2(full / start) + 1e-9))
    if levels < 1:
        return 1.0
    span = float((1 << levels) - 1)
    # Stage i occupies a tau interval of width 2^i / span, so the stage
    # index solves 2^i - 1 <= tau * span < 2^(i+1) - 1.
    stage = min(int(math.floor(math.log2(tau * span + 1.0))), levels - 1)
    resolution = start << stage
    return (full - resolution) / float(full - start)


def strength_at(spec: ScheduleSpec, t: float, total: float) -> float:
    """Blur strength at a (possibly fractional) step; used by the CSV writer."""
    if spec.family == "none":
        return 0.0
    tau = truncated_progress(t, total, spec.duration)
    if tau <= 0.0:
        return 1.0
    if tau >= 1.0:
        return 0.0
    if spec.family == "linear":
        return 1.0 - tau
    if spec.family == "step":
        return max(0.0, 1.0 - math.floor(tau * spec.stages) / spec.stages)
    if spec.family == "sin":
        return 0.5 * (1.0 + math.cos(math.pi * tau))
    if spec.family == "exp":
        return math.expm1(spec.rate * (1.0 - tau)) / math.expm1(spec.rate)
    return _pow2_strength(tau, spec.full_res, spec.start_res)


def strength(spec: ScheduleSpec, clock: TrainClock) -> float:
    """Blur strength for the given training step, in [0, 1]."""
    return strength_at(spec, clock.t, clock.total)


def enumerate_families(**overrides) -> list[ScheduleSpec]:
    """The ten ablation configurations, in canonical order.

    Keyword overrides (``duration``, ``full_res``, ``start_res``) apply to
    every returned spec.
    """
    specs = [
        ScheduleSpec("none"),
        ScheduleSpec("linear"),
        ScheduleSpec("step", stages=4),
        ScheduleSpec("step", stages=8),
        ScheduleSpec("pow2"),
        ScheduleSpec("sin"),
        ScheduleSpec("exp", rate=2.0),
        ScheduleSpec("exp", rate=5.0),
        ScheduleSpec("exp", rate=-2.0),
        ScheduleSpec("exp", rate=-5.0),
    ]
    if overrides:
        specs = [replace(s, **overrides) for s in specs]
    return specs
