"""Command-line surface: augment, preview, schedule, bench, validate.

Every command prints its fully-resolved configuration as one JSON line
before doing any work; feeding that JSON back through ``--config``
reproduces the run byte for byte.  Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .layouts import ManifestError, apply_filters, read_manifest
from .pipeline import DirectorySink, PipelineConfig, PipelineError, bench, preview, run_epochal
from .resample import strength_to_resolution
from .schedules import enumerate_families, parse_spec, strength_at, truncated_progress

_CONFIG_KEYS = ("manifest", "images", "out", "schedule", "variant", "p_obj",
                "start_res", "duration", "steps", "batch_size", "seed", "workers")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--manifest", help="layout manifest path")
    p.add_argument("--images", help="image root (default: manifest directory)")
    p.add_argument("--out", help="output directory for PNGs + provenance log")
    p.add_argument("--schedule", help="schedule spec: none|linear|step:N|pow2|sin|exp:K")
    p.add_argument("--variant", help="objblur|fullblur|cutblur|randmask|none")
    p.add_argument("--p-obj", dest="p_obj", type=float, help="object-blur probability")
    p.add_argument("--start-res", dest="start_res", type=int, help="resolution at strength 1")
    p.add_argument("--duration", type=float, help="active fraction of total steps")
    p.add_argument("--steps", type=int, help="total training steps")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="samples per step")
    p.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    p.add_argument("--workers", type=int, help="worker process count")


def _build_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  require_out: bool = False) -> PipelineConfig:
    mapping: dict = {}
    if args.config:
        mapping.update(json.loads(Path(args.config).read_text()))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            mapping[key] = val
    if not mapping.get("manifest"):
        parser.error("--manifest is required (directly or via --config)")
    if require_out and not mapping.get("out"):
        parser.error("--out is required (directly or via --config)")
    try:
        return PipelineConfig.from_mapping(mapping)
    except (PipelineError, ValueError) as e:
        parser.error(str(e))
        raise AssertionError("unreachable")


def _print_config(config: PipelineConfig) -> None:
    print(json.dumps(config.describe(), sort_keys=True))


def cmd_augment(args, parser) -> int:
    config = _build_config(args, parser, require_out=True)
    _print_config(config)
    with DirectorySink(config.out) as sink:
        report = run_epochal(config, sink)
    print(json.dumps({"report": report.to_dict()}, sort_keys=True))
    if report.skipped:
        print(f"warning: {report.skipped} samples skipped", file=sys.stderr)
    return 0


def cmd_preview(args, parser) -> int:
    config = _build_config(args, parser, require_out=True)
    _print_config(config)
    try:
        t_list = [int(v) for v in args.at.split(",") if v.strip() != ""]
    except ValueError:
        parser.error(f"--at must be comma-separated integers, got '{args.at}'")
    with DirectorySink(config.out) as sink:
        for sample in preview(config, args.image_id, t_list):
            sink(sample)
    print(f"wrote {2 * len(t_list)} previews to {config.out}")
    return 0


def cmd_schedule(args, parser) -> int:
    try:
        if args.family == "all":
            specs = enumerate_families(duration=args.duration,
                                       full_res=args.full_res, start_res=args.start_res)
        else:
            specs = [parse_spec(args.family, duration=args.duration,
                                full_res=args.full_res, start_res=args.start_res)]
    except ValueError as e:
        parser.error(str(e))
    resolved = {
        "family": args.family, "points": args.points, "steps": args.steps,
        "duration": args.duration, "full_res": args.full_res,
        "start_res": args.start_res, "out_dir": str(Path(args.out_dir).resolve()),
    }
    print(json.dumps(resolved, sort_keys=True))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    full = (args.full_res, args.full_res)
    start = (args.start_res, args.start_res)
    for spec in specs:
        path = out_dir / f"schedule_{spec.label().replace(':', '_')}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,tau,s,W_t,H_t\n")
            for t in np.linspace(0.0, float(args.steps), args.points):
                tau = truncated_progress(t, args.steps, spec.duration)
                s = strength_at(spec, t, args.steps)
                w_t, h_t = strength_to_resolution(s, full, start)
                fh.write(f"{t:.12g},{tau!r},{s!r},{w_t},{h_t}\n")
        print(f"wrote {path}")
    return 0


def cmd_bench(args, parser) -> int:
    config = _build_config(args, parser)
    _print_config(config)
    report = bench(config, args.seconds)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_validate(args, parser) -> int:
    config = _build_config(args, parser)
    _print_config(config)
    manifest = read_manifest(config.manifest)
    filtered, stats = apply_filters(manifest.layouts, config.rules)
    print(f"layouts in manifest: {len(manifest.layouts)}")
    print(f"boxes removed by area rule: {stats.boxes_removed_area}")
    print(f"layouts dropped by count rule: {stats.layouts_dropped_count}")
    print(f"layouts dropped by excluded classes: {stats.layouts_dropped_excluded}")
    print(f"dropped: {stats.layouts_dropped}")
    print(f"layouts surviving: {len(filtered)}")
    return 0 if filtered else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="objblur",
        description="Deterministic curriculum-blur augmentation engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", help="run the full schedule, writing PNGs + provenance")
    _add_config_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("preview", help="render both branches of one image at chosen steps")
    _add_config_flags(p)
    p.add_argument("--image-id", required=True, help="image to preview")
    p.add_argument("--at", required=True, help="comma-separated step list, e.g. 0,100,200")
    p.set_defaults(func=cmd_preview)

    p = sub.add_parser("schedule", help="emit schedule curves as CSV")
    p.add_argument("--family", default="all",
                   help="schedule spec, or 'all' for the ten ablation curves")
    p.add_argument("--points", type=int, default=200, help="rows per CSV")
    p.add_argument("--steps", type=int, default=200, help="total steps T")
    p.add_argument("--duration", type=float, default=1.0, help="active fraction")
    p.add_argument("--full-res", dest="full_res", type=int, default=128)
    p.add_argument("--start-res", dest="start_res", type=int, default=8)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("bench", help="measure sample throughput and stage timings")
    _add_config_flags(p)
    p.add_argument("--seconds", type=float, default=5.0, help="length of each timed pass")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="report filter-rule statistics for a manifest")
    _add_config_flags(p)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (PipelineError, ManifestError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
