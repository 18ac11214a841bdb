"""Command-line harness: run, eval, tune, bench.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
inputs, label mismatches), 3 internal invariant violation. The worker pool
size for tuning defaults to the STREAMCLUST_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import gc
import json
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import _accel, fileio
from .core import ClusterDatabase, Params, Sample
from .engine import process_sample, process_sample_stage1_only
from .errors import (
    BadMagic,
    CorruptSnapshot,
    DimensionMismatch,
    DuplicateId,
    DuplicateSample,
    EmptyTrainingSet,
    MissingTruthLabel,
    NonFiniteValue,
    ParseError,
    TruncatedFile,
    UnsupportedDtype,
    UnsupportedVersion,
    ZeroVector,
)
from .metrics import IdentityPartition, compute_metric_report, extract_identities
from .tuner import TuneConfig, tune

DATA_ERRORS = (
    OSError,
    ValueError,
    BadMagic,
    UnsupportedVersion,
    UnsupportedDtype,
    TruncatedFile,
    NonFiniteValue,
    ParseError,
    DuplicateId,
    CorruptSnapshot,
    ZeroVector,
    DimensionMismatch,
    DuplicateSample,
    MissingTruthLabel,
    EmptyTrainingSet,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_params(spec: str) -> Params:
    """Accept 'thr_f,thr_wc,thr_sc,ns_r,nc_r' or a tuned-params JSON file."""
    parts = spec.split(",")
    if len(parts) == 5:
        try:
            values = [float(parts[0]), float(parts[1]), float(parts[2]),
                      int(parts[3]), int(parts[4])]
        except ValueError:
            values = None
        if values is not None:
            return Params(thr_f=values[0], thr_wc=values[1], thr_sc=values[2],
                          ns_r=values[3], nc_r=values[4])
    path = Path(spec)
    if not path.exists():
        raise UsageError(
            f"--params {spec!r} is neither five comma-separated values nor a file"
        )
    data = json.loads(path.read_text())
    return Params(thr_f=data["thr_f"], thr_wc=data["thr_wc"], thr_sc=data["thr_sc"],
                  ns_r=data["ns_r"], nc_r=data["nc_r"])


def _params_dict(params: Params) -> dict:
    return {"thr_f": params.thr_f, "thr_wc": params.thr_wc, "thr_sc": params.thr_sc,
            "ns_r": params.ns_r, "nc_r": params.nc_r}


def _latency_stats(latencies_us: np.ndarray) -> dict:
    return {
        "mean_us": float(latencies_us.mean()),
        "p50_us": float(np.percentile(latencies_us, 50)),
        "p90_us": float(np.percentile(latencies_us, 90)),
        "p99_us": float(np.percentile(latencies_us, 99)),
        "max_us": float(latencies_us.max()),
    }


def _write_report(report: dict, path: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _default_workers() -> int:
    raw = os.environ.get("STREAMCLUST_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"STREAMCLUST_WORKERS={raw!r} is not an integer") from None


# -- run ----------------------------------------------------------------------


def cmd_run(args) -> int:
    dim, samples = fileio.read_vectors(args.vectors_path)
    labels = distractors = None
    if args.labels_path:
        labels, distractors = fileio.read_labels(args.labels_path)

    if args.snapshot_in:
        db = fileio.load_snapshot(args.snapshot_in)
        if db.dim != dim:
            raise DimensionMismatch(
                f"snapshot dim {db.dim} does not match vector file dim {dim}"
            )
        if args.params:
            given = _parse_params(args.params)
            if given != db.params:
                raise UsageError("--params disagrees with the restored snapshot")
    else:
        if not args.params:
            raise UsageError("--params is required unless resuming from --snapshot_in")
        db = ClusterDatabase(dim, _parse_params(args.params))

    id_offset = (max(db.ingested_ids) + 1) if db.ingested_ids else 0
    order = (fileio.shuffle_order(len(samples), args.seed)
             if args.seed is not None else np.arange(len(samples)))
    process = process_sample_stage1_only if args.stage1_only else process_sample

    _accel.warmup(dim)
    latencies = np.empty(len(samples))
    t_start = time.perf_counter()
    for k, idx in enumerate(order):
        src = samples[int(idx)]
        report = process(db, Sample(id=id_offset + src.id, vector=src.vector))
        latencies[k] = report.elapsed_us
    total_s = time.perf_counter() - t_start

    pred = extract_identities(db)
    assignments_path = args.assignments_path or (
        (args.report_path or args.vectors_path) + ".assignments.csv"
    )
    fileio.write_assignments(assignments_path, pred)
    if args.snapshot_out:
        fileio.save_snapshot(args.snapshot_out, db)

    report = {
        "config": {
            "vectors_path": args.vectors_path,
            "labels_path": args.labels_path,
            "params": _params_dict(db.params),
            "seed": args.seed,
            "stage1_only": bool(args.stage1_only),
            "snapshot_in": args.snapshot_in,
            "snapshot_out": args.snapshot_out,
            "assignments_path": assignments_path,
            "id_offset": id_offset,
        },
        "n_samples": len(samples),
        "total_wall_s": total_s,
        "latency": _latency_stats(latencies) if len(samples) else {},
        "final_clusters": db.n_clusters,
        "final_identities": pred.n_identities,
    }
    if labels is not None:
        shifted = {id_offset + sid: lab for sid, lab in labels.items()}
        shifted_distractors = {id_offset + sid for sid in distractors}
        eval_pred = pred if id_offset == 0 else pred.restrict(
            {sid for sid in pred.assignment if sid >= id_offset}
        )
        metrics = compute_metric_report(eval_pred, shifted, shifted_distractors)
        report["metrics"] = metrics.as_dict()
        for line in metrics.flat_lines():
            print(line)
    _write_report(report, args.report_path)
    return 0


# -- eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    assignment = fileio.read_assignments(args.pred_csv)
    labels, distractors = fileio.read_labels(args.labels_path)
    pred = IdentityPartition.from_labels(assignment)
    metrics = compute_metric_report(pred, labels, distractors)
    for line in metrics.flat_lines():
        print(line)
    if args.report_path:
        _write_report({"pred_csv": args.pred_csv, "labels_path": args.labels_path,
                       "metrics": metrics.as_dict()}, args.report_path)
    return 0


# -- tune ---------------------------------------------------------------------


def cmd_tune(args) -> int:
    dim, samples = fileio.read_vectors(args.train_vectors)
    labels, distractors = fileio.read_labels(args.train_labels)
    cfg = TuneConfig(
        threshold_lo=args.threshold_lo,
        threshold_hi=args.threshold_hi,
        initial_step=args.initial_step,
        refinement_rounds=args.refinement_rounds,
        ns_r_range=tuple(int(x) for x in args.ns_r_range.split(",")),
        nc_r_values=tuple(int(x) for x in args.nc_r_values.split(",")),
        parallel_workers=args.parallel_workers,
    )
    result = tune(samples, labels, cfg, distractors)

    params_doc = dict(_params_dict(result.params), score=result.score)
    Path(args.params_out).write_text(json.dumps(params_doc, indent=2, sort_keys=True) + "\n")

    trace = {
        "config": {
            "train_vectors": args.train_vectors,
            "train_labels": args.train_labels,
            "threshold_lo": cfg.threshold_lo,
            "threshold_hi": cfg.threshold_hi,
            "initial_step": cfg.initial_step,
            "refinement_rounds": cfg.refinement_rounds,
            "ns_r_range": list(cfg.ns_r_range),
            "nc_r_values": list(cfg.nc_r_values),
            "objective": cfg.objective,
            "parallel_workers": cfg.parallel_workers,
        },
        "phase1": {
            "step_sequence": result.thresholds.step_sequence,
            "round_counts": result.thresholds.round_counts,
            "best": {"thr_f": result.thresholds.thr_f, "thr_wc": result.thresholds.thr_wc,
                     "thr_sc": result.thresholds.thr_sc, "score": result.thresholds.score},
        },
        "phase2": {
            "n_evaluations": len(result.robustness.evaluations),
            "best": {"ns_r": result.robustness.ns_r, "nc_r": result.robustness.nc_r,
                     "score": result.robustness.score},
        },
        "evaluations": [
            dict(_params_dict(e.params), score=e.score, runtime_s=e.runtime_s,
                 phase=e.phase, round=e.round)
            for e in result.thresholds.evaluations + result.robustness.evaluations
        ],
        "params": params_doc,
    }
    _write_report(trace, args.report_path)
    print(f"tuned params: {json.dumps(params_doc, sort_keys=True)}")
    return 0


# -- bench --------------------------------------------------------------------


def cmd_bench(args) -> int:
    dim, samples = fileio.read_vectors(args.vectors_path)
    labels = distractors = None
    if args.labels_path:
        labels, distractors = fileio.read_labels(args.labels_path)
    params = _parse_params(args.params)
    n = len(samples)
    if args.checkpoints:
        checkpoints = sorted({int(x) for x in args.checkpoints.split(",")})
        if not checkpoints or checkpoints[0] < 1 or checkpoints[-1] > n:
            raise UsageError(f"checkpoints must lie in [1, {n}]")
    else:
        checkpoints = sorted({n * (i + 1) // 10 for i in range(10)})

    _accel.warmup(dim)
    per_seed = []
    rows: dict[int, list] = {c: [] for c in checkpoints}
    for rep in range(args.repeats):
        seed = args.seed + rep
        order = fileio.shuffle_order(n, seed)
        db = ClusterDatabase(dim, params)
        latencies = np.empty(n)
        gc_was_enabled = gc.isenabled()
        gc.disable()
        try:
            prev = 0
            marks = []
            for k, idx in enumerate(order):
                src = samples[int(idx)]
                report = process_sample(db, Sample(id=src.id, vector=src.vector))
                latencies[k] = report.elapsed_us
                if k + 1 in rows:
                    window = latencies[prev:k + 1]
                    marks.append({
                        "samples": k + 1,
                        "mean_latency_us": float(window.mean()),
                        "median_latency_us": float(np.median(window)),
                        "clusters": db.n_clusters,
                    })
                    prev = k + 1
        finally:
            if gc_was_enabled:
                gc.enable()
        for mark in marks:
            rows[mark["samples"]].append(mark)
        seed_doc = {
            "seed": seed,
            "checkpoints": marks,
            "latency": _latency_stats(latencies),
            "final_clusters": db.n_clusters,
        }
        if labels is not None:
            pred = extract_identities(db)
            metrics = compute_metric_report(pred, labels, distractors)
            seed_doc["bcubed_f"] = metrics.bcubed_f
            seed_doc["nmi"] = metrics.nmi
        per_seed.append(seed_doc)

    csv_lines = ["samples,mean_latency_us,median_latency_us,clusters"]
    for c in checkpoints:
        marks = rows[c]
        csv_lines.append(
            f"{c},"
            f"{np.mean([m['mean_latency_us'] for m in marks]):.3f},"
            f"{np.mean([m['median_latency_us'] for m in marks]):.3f},"
            f"{np.mean([m['clusters'] for m in marks]):.1f}"
        )
    csv_text = "\n".join(csv_lines) + "\n"
    if args.csv_out:
        Path(args.csv_out).write_text(csv_text)
    else:
        print(csv_text, end="")

    report = {
        "config": {
            "vectors_path": args.vectors_path,
            "labels_path": args.labels_path,
            "params": _params_dict(params),
            "checkpoints": checkpoints,
            "repeats": args.repeats,
            "seed": args.seed,
            "csv_out": args.csv_out,
        },
        "per_seed": per_seed,
    }
    if labels is not None:
        fs = [doc["bcubed_f"] for doc in per_seed]
        report["bcubed_f_mean"] = float(np.mean(fs))
        report["bcubed_f_std"] = float(np.std(fs))
    _write_report(report, args.report_path)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="streamclust",
                     description="Online identity clustering over embedding streams")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="cluster a vector file and report metrics")
    run.add_argument("--vectors_path", required=True)
    run.add_argument("--labels_path")
    run.add_argument("--params", help="five comma-separated values or a params JSON file")
    run.add_argument("--seed", type=int, default=None, help="shuffle seed (omit: file order)")
    run.add_argument("--stage1_only", action="store_true")
    run.add_argument("--snapshot_in")
    run.add_argument("--snapshot_out")
    run.add_argument("--assignments_path")
    run.add_argument("--report_path")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score an assignment file against labels")
    ev.add_argument("--pred_csv", required=True)
    ev.add_argument("--labels_path", required=True)
    ev.add_argument("--report_path")
    ev.set_defaults(func=cmd_eval)

    tn = sub.add_parser("tune", help="two-phase parameter search on a labeled set")
    tn.add_argument("--train_vectors", required=True)
    tn.add_argument("--train_labels", required=True)
    tn.add_argument("--threshold_lo", type=float, default=0.0)
    tn.add_argument("--threshold_hi", type=float, default=2.0)
    tn.add_argument("--initial_step", type=float, default=0.1)
    tn.add_argument("--refinement_rounds", type=int, default=4)
    tn.add_argument("--ns_r_range", default="3,6")
    tn.add_argument("--nc_r_values", default="5,10,15,20,25")
    tn.add_argument("--parallel_workers", type=int, default=None)
    tn.add_argument("--params_out", required=True)
    tn.add_argument("--report_path")
    tn.set_defaults(func=cmd_tune)

    bn = sub.add_parser("bench", help="per-sample latency scaling benchmark")
    bn.add_argument("--vectors_path", required=True)
    bn.add_argument("--labels_path")
    bn.add_argument("--params", required=True)
    bn.add_argument("--checkpoints", help="comma-separated cumulative sample counts")
    bn.add_argument("--repeats", type=int, default=1)
    bn.add_argument("--seed", type=int, default=0)
    bn.add_argument("--csv_out")
    bn.add_argument("--report_path")
    bn.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "parallel_workers", 1) is None:
            args.parallel_workers = _default_workers()
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        print("internal error: invariant violation", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
