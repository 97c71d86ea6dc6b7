"""Deterministic curriculum-blur augmentation engine for layout-annotated corpora."""

from .compositor import (
    BlurPolicy,
    BranchDecision,
    composite_cutblur,
    composite_fullblur,
    composite_objblur,
    composite_randmask,
    decide_branch,
    draw_cutblur_patch,
)
from .layouts import (
    BBox,
    FilterRules,
    Layout,
    Manifest,
    filter_layouts,
    parse_manifest,
    rasterize_mask,
    read_manifest,
    serialize_manifest,
)
from .pipeline import (
    AugmentedSample,
    DirectorySink,
    PipelineConfig,
    PipelineError,
    Provenance,
    RunReport,
    ThroughputReport,
    bench,
    preview,
    rng_stream,
    run_epochal,
    stream_samples,
)
from .resample import blur, resize_bilinear, resize_bilinear_float, strength_to_resolution
from .schedules import ScheduleSpec, TrainClock, enumerate_families, parse_spec, strength

__version__ = "0.1.0"
