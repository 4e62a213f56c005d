"""Command-line entry point: ``trafficwatch {run,simulate,evaluate,prep}``.

Exit codes: 0 success, 1 runtime error, 2 configuration or input-schema error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from .errors import ConfigError, EmptyDataset, InvalidValue, MalformedRecord, TrafficWatchError

log = logging.getLogger("trafficwatch")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _err(msg: str) -> None:
    print(f"trafficwatch: error: {msg}", file=sys.stderr)


def cmd_run(args) -> int:
    from .config import RunConfig
    from .engine import run

    try:
        config = RunConfig.load(args.config)
        engine, stats = run(config, record_series=bool(args.figures))
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    summary = stats.to_dict()
    print(json.dumps(summary, sort_keys=True))
    if args.figures:
        from .plotting import plot_occupancy

        plot_occupancy(engine.series, engine.transition_records, args.figures, engine.bands)
    return EXIT_OK if stats.reconciles else EXIT_RUNTIME


def cmd_simulate(args) -> int:
    from .simulator import ScenarioConfig, run_scenario, write_scenario

    try:
        with open(args.scenario) as fh:
            data = json.load(fh)
    except OSError as exc:
        _err(f"{args.scenario}: {exc.strerror}")
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        _err(f"{args.scenario}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
        return EXIT_CONFIG
    try:
        config = ScenarioConfig.from_dict(data)
        frames, truth = write_scenario(config, args.out)
    except ConfigError as exc:
        _err(f"{args.scenario}: {exc}")
        return EXIT_CONFIG
    except TrafficWatchError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    print(frames)
    print(truth)
    if args.figures:
        from .plotting import plot_truth_counts

        _, gt = run_scenario(config)
        plot_truth_counts(gt.counts, args.figures)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .metrics import curves_for_plot, evaluate_dataset, format_table, load_dataset

    reports = []
    curves = {}
    for pred in args.pred:
        model = os.path.splitext(os.path.basename(pred))[0]
        try:
            dataset = load_dataset(args.gt, pred)
            reports.append(evaluate_dataset(dataset, model))
        except OSError as exc:
            _err(f"{exc.filename}: {exc.strerror}")
            return EXIT_CONFIG
        except (EmptyDataset, MalformedRecord, InvalidValue) as exc:
            _err(f"{type(exc).__name__}: {exc}")
            return EXIT_CONFIG
        if args.figures:
            curves[model] = curves_for_plot(dataset)
    print(format_table(reports))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"models": [r.to_dict() for r in reports]}, fh, indent=2)
    if args.figures:
        from .plotting import plot_pr_curves

        plot_pr_curves(curves, args.figures)
    return EXIT_OK


def cmd_prep(args) -> int:
    from .dataset_prep import augment_variants, letterbox_transform, read_items, split_dataset, write_items

    try:
        ratios = [float(r) for r in args.ratios.split(",")]
    except ValueError:
        _err(f"--ratios: expected comma-separated numbers, got {args.ratios!r}")
        return EXIT_CONFIG
    try:
        items = read_items(args.input)
        out = []
        for item in items:
            boxed = letterbox_transform(item, args.target_size).item
            out.extend(augment_variants(boxed, args.variants, args.seed))
        manifest = split_dataset(out, ratios, args.seed)
    except OSError as exc:
        _err(f"{exc.filename}: {exc.strerror}")
        return EXIT_CONFIG
    except TrafficWatchError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_CONFIG
    os.makedirs(args.out, exist_ok=True)
    write_items(os.path.join(args.out, "annotations.jsonl"), out)
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=1)
    print(f"{len(out)} items: train {len(manifest.train)}, validation {len(manifest.validation)}, "
          f"test {len(manifest.test)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trafficwatch", description="Street congestion monitoring engine.")
    p.add_argument("-v", "--verbose", action="store_true", help="log transitions and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="process a detection stream and drive the boards")
    r.add_argument("--config", required=True, help="run configuration JSON")
    r.add_argument("--figures", metavar="DIR", help="write occupancy figure(s) here")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("simulate", help="generate a synthetic stream plus ground truth")
    s.add_argument("scenario", help="scenario JSON")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--figures", metavar="DIR", help="write ground-truth figure here")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="precision/recall/mAP report per prediction file")
    e.add_argument("--gt", required=True, help="ground-truth annotations JSONL")
    e.add_argument("--pred", required=True, action="append", help="predictions JSONL (repeatable)")
    e.add_argument("--json", metavar="PATH", help="also write the report as JSON")
    e.add_argument("--figures", metavar="DIR", help="write PR-curve figures here")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("prep", help="letterbox, augment and split an annotation set")
    d.add_argument("--input", required=True, help="annotations JSONL")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--target-size", type=int, default=640)
    d.add_argument("--variants", type=int, default=10)
    d.add_argument("--ratios", default="0.8,0.1,0.1")
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_prep)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrafficWatchError as exc:
        _err(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
