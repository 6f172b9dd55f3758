"""Command-line entry point.

Exit status: 0 success, 1 validation/usage error, 2 numerical failure (or
partial partition failure under ``--strict``).  Logs go to stderr; results
go to files or stdout.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import secrets
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import AugmentationPlan, augment, file_sha256, replay, write_augmented
from .dataset import (
    FLOOR_HEIGHT_M,
    STRATEGIES,
    APFilter,
    Strategy,
    compute_stats,
    load_csv,
    make_partition,
    split_halves,
    write_csv,
)
from .errors import MogpAugError
from .evaluation import compare_runs, knn_localize, score
from .gp import FitOptions, TrainingSet, fit, initial_model
from .kernels import Matern52

log = logging.getLogger("mogpaug")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _default_jobs():
    try:
        return max(1, int(os.environ.get("MOGPAUG_JOBS", "1")))
    except ValueError:
        return 1


def _seed(args):
    if getattr(args, "seed", None) is None:
        args.seed = secrets.randbits(31)
    print(f"seed={args.seed}", file=sys.stderr)
    return args.seed


def _provenance(args, inputs):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "_argv")}
    return {
        "tool": "mogpaug",
        "tool_version": __version__,
        "argv": list(getattr(args, "_argv", [])),
        "config": config,
        "input_sha256": {str(p): file_sha256(p) for p in inputs},
    }


def _emit_json(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _fit_options(args):
    return FitOptions(restarts=args.restarts, max_iters=args.max_iters, tol=args.tol,
                      seed=args.seed)


def cmd_stats(args):
    ds = load_csv(args.csv)
    doc = compute_stats(ds).to_dict()
    doc["provenance"] = _provenance(args, [args.csv])
    _emit_json(doc, args.out)
    return EXIT_OK


def cmd_fit(args):
    _seed(args)
    ds = load_csv(args.csv)
    strategy = Strategy(args.strategy, args.building, args.floor)
    part = make_partition(ds, strategy, APFilter(args.min_detection_rate, args.min_detections),
                          args.floor_height)
    det = ds.detected[part.index][:, part.selected_aps]
    ts = TrainingSet(part.inputs, ds.rssi[part.index][:, part.selected_aps],
                     output_ids=tuple(ds.ap_ids[j] for j in part.selected_aps), mask=det)
    if ts.N * ts.M > args.budget:
        log.warning("partition has %d x %d entries, above budget %d",
                    ts.N, ts.M, args.budget)
    model, report = fit(initial_model(ts, Matern52(1.0)), ts, _fit_options(args))
    doc = {
        "format_version": 1,
        "models": [model.to_dict()],
        "fit_reports": [dataclasses.asdict(report)],
        "partition": {"strategy": dataclasses.asdict(strategy),
                      "floors": list(part.floors), "n_records": int(len(part.index))},
        "provenance": _provenance(args, [args.csv]),
    }
    _emit_json(doc, args.out)
    log.info("fit done: log marginal likelihood %.4f", report.log_marginal_likelihood)
    return EXIT_OK


def cmd_augment(args):
    with open(args.plan) as fh:
        raw = json.load(fh)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = AugmentationPlan.from_dict(raw, strict=args.strict)
    for w in caught:
        log.warning("%s", w.message)
    if args.seed is None:
        args.seed = plan.seed if "seed" in raw else None
    _seed(args)
    plan = dataclasses.replace(plan, seed=args.seed)
    ds = load_csv(args.csv)
    aug = augment(ds, plan, _fit_options(args), jobs=args.jobs)
    aug.provenance["run"] = _provenance(args, [args.csv, args.plan])
    write_augmented(aug, args.out, input_path=args.csv)
    log.info("wrote %d records (%d generated) to %s",
             len(aug.dataset), len(aug.dataset) - aug.n_original, args.out)
    if aug.failures:
        log.warning("%d partition(s) failed:", len(aug.failures))
        for f in aug.failures:
            log.warning("  %s: %s: %s", f["strategy"], f["error"], f["message"])
        if args.strict:
            return EXIT_NUMERICAL
    return EXIT_OK


def _metrics_summary(results):
    keys = ("building_hit_pct", "floor_hit_pct", "mean_3d_error_m")
    mean = {k: float(np.mean([r[k] for r in results])) for k in keys}
    best = {
        "building_hit_pct": max(r["building_hit_pct"] for r in results),
        "floor_hit_pct": max(r["floor_hit_pct"] for r in results),
        "mean_3d_error_m": min(r["mean_3d_error_m"] for r in results),
    }
    return mean, best


def cmd_evaluate(args):
    train = load_csv(args.train)
    test = load_csv(args.test)
    runs = []
    seeds = args.split_seed or [None]
    for seed in seeds:
        queries = test if seed is None else split_halves(test, seed)[1]
        pred = knn_localize(train, queries, k=args.k)
        res = score(pred, queries, args.floor_height)
        runs.append({"split_seed": seed, "n_queries": res.n_queries, **res.metrics()})
    mean, best = _metrics_summary(runs)
    doc = {
        "label": args.label,
        "metrics": mean,
        "summary": {"mean": mean, "best": best},
        "runs": runs,
        "config": {"k": args.k, "floor_height": args.floor_height,
                   "split_seeds": list(args.split_seed or [])},
        "dataset_hashes": {"train": train.fingerprint_hash(),
                           "test": test.fingerprint_hash() + ":" + json.dumps(args.split_seed or [])},
        "provenance": _provenance(args, [args.train, args.test]),
    }
    _emit_json(doc, args.out)
    log.info("building %.2f%%  floor %.2f%%  3D error %.3f m",
             mean["building_hit_pct"], mean["floor_hit_pct"], mean["mean_3d_error_m"])
    return EXIT_OK


def cmd_compare(args):
    reports = [json.loads(Path(p).read_text()) for p in args.reports]
    labels = args.labels or [r.get("label") or Path(p).stem for r, p in zip(reports, args.reports)]
    doc, text = compare_runs(reports, labels)
    doc["provenance"] = _provenance(args, args.reports)
    if args.out:
        _emit_json(doc, args.out)
    sys.stdout.write(text + "\n")
    return EXIT_OK


def cmd_split(args):
    _seed(args)
    ds = load_csv(args.csv)
    a, b = split_halves(ds, args.seed)
    write_csv(a, args.out_a)
    write_csv(b, args.out_b)
    prov = _provenance(args, [args.csv])
    for path in (args.out_a, args.out_b):
        _emit_json(prov, str(path) + ".provenance.json")
    return EXIT_OK


def cmd_synth(args):
    from .synthetic import Scenario, generate

    _seed(args)
    sc = Scenario(seed=args.seed, n_floors=args.floors, sparse_floor=args.sparse_floor)
    train, test, _ = generate(sc)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(train, out / "train.csv")
    write_csv(test, out / "test.csv")
    _emit_json({"scenario": dataclasses.asdict(sc), "provenance": _provenance(args, [])},
               out / "scenario.json")
    return EXIT_OK


def cmd_replay(args):
    new, recorded = replay(args.sidecar, args.out, input_path=args.input, jobs=args.jobs)
    sys.stdout.write(json.dumps({"output_sha256": new, "recorded_sha256": recorded,
                                 "identical": new == recorded}) + "\n")
    return EXIT_OK if new == recorded else EXIT_NUMERICAL


def _add_fit_opts(p):
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = _Parser(prog="mogpaug", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--jobs", type=int, default=_default_jobs(),
                        help="worker threads (default: $MOGPAUG_JOBS or 1)")
    parser.add_argument("--strict", action="store_true",
                        help="reject unknown plan fields; exit 2 on partial failures")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="per building/floor statistics as JSON")
    p.add_argument("csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("fit", help="fit one partition and write a model checkpoint")
    p.add_argument("csv")
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--building", type=int, required=True)
    p.add_argument("--floor", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--floor-height", type=float, default=FLOOR_HEIGHT_M)
    p.add_argument("--min-detection-rate", type=float, default=APFilter.min_detection_rate)
    p.add_argument("--min-detections", type=int, default=APFilter.min_detections)
    p.add_argument("--budget", type=int, default=20_000)
    _add_fit_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("augment", help="augment a dataset according to a plan file")
    p.add_argument("csv")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    _add_fit_opts(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("evaluate", help="k-NN localisation metrics")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--floor-height", type=float, default=FLOOR_HEIGHT_M)
    p.add_argument("--split-seed", type=int, action="append",
                   help="evaluate on the second half of a seeded split; repeatable")
    p.add_argument("--label")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="side-by-side table of evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("split", help="seeded split of a CSV into two halves")
    p.add_argument("csv")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-a", required=True)
    p.add_argument("--out-b", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", help="write the bundled synthetic scenario")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--floors", type=int, default=3)
    p.add_argument("--sparse-floor", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="re-run an augmentation from its provenance sidecar")
    p.add_argument("sidecar")
    p.add_argument("--out", required=True)
    p.add_argument("--input")
    p.set_defaults(func=cmd_replay)
    return parser


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ArithmeticError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except (MogpAugError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID


def main():
    sys.exit(run())
