"""Two-phase parameter search.

Phase 1 grid-searches the three distance thresholds, halving the lattice
step each round (0.1, 0.05, 0.025, 0.0125 with defaults) and re-centering a
+/-(previous step) window around the incumbent, subject to the ordering
constraint thr_sc <= thr_f <= thr_wc. Phase 2 scans a single (ns_r, nc_r)
grid with the thresholds frozen. Candidates are scored by BCubed F over a
full clustering run of the labeled training stream; evaluations fan out
over a process pool when parallel_workers > 1.
"""

from __future__ import annotations

import math
import multiprocessing
import time
from dataclasses import dataclass, field
from typing import AbstractSet, Mapping, Sequence

from .core import ClusterDatabase, Params, Sample
from .engine import process_sample
from .errors import EmptyTrainingSet, MissingTruthLabel
from .metrics import IdentityPartition, bcubed, extract_identities

PHASE1_NS_R = 4
PHASE1_NC_R = 10


@dataclass(frozen=True)
class TuneConfig:
    threshold_lo: float = 0.0
    threshold_hi: float = 2.0
    initial_step: float = 0.1
    refinement_rounds: int = 4
    ns_r_range: tuple[int, int] = (3, 6)
    nc_r_values: tuple[int, ...] = (5, 10, 15, 20, 25)
    objective: str = "bcubed_f"
    parallel_workers: int = 1

    def __post_init__(self):
        if self.initial_step <= 0:
            raise ValueError(f"initial_step must be > 0, got {self.initial_step}")
        if self.refinement_rounds < 1:
            raise ValueError(f"refinement_rounds must be >= 1, got {self.refinement_rounds}")
        if not 0.0 <= self.threshold_lo < self.threshold_hi <= 2.0:
            raise ValueError(
                f"threshold range [{self.threshold_lo}, {self.threshold_hi}] invalid"
            )
        if self.ns_r_range[0] < 1 or self.ns_r_range[1] < self.ns_r_range[0]:
            raise ValueError(f"ns_r_range {self.ns_r_range} invalid")
        if not self.nc_r_values or min(self.nc_r_values) < 1:
            raise ValueError(f"nc_r_values {self.nc_r_values} invalid")
        if self.objective != "bcubed_f":
            raise ValueError(f"unsupported objective {self.objective!r}")
        if self.parallel_workers < 1:
            raise ValueError(f"parallel_workers must be >= 1, got {self.parallel_workers}")

    @property
    def step_sequence(self) -> list[float]:
        return [self.initial_step * 0.5 ** i for i in range(self.refinement_rounds)]


@dataclass(frozen=True)
class Evaluation:
    """One scored candidate, with the round it came from."""

    params: Params
    score: float
    runtime_s: float
    phase: str
    round: int


@dataclass
class ThresholdSearchResult:
    thr_f: float
    thr_wc: float
    thr_sc: float
    score: float
    step_sequence: list[float]
    round_counts: list[int]
    evaluations: list[Evaluation] = field(repr=False)


@dataclass
class RobustnessSearchResult:
    ns_r: int
    nc_r: int
    score: float
    evaluations: list[Evaluation] = field(repr=False)


@dataclass
class TuneResult:
    params: Params
    score: float
    thresholds: ThresholdSearchResult
    robustness: RobustnessSearchResult


# Worker-process state, installed once per pool via fork.
_WORK: dict = {}


def _init_worker(samples, truth, distractors, dim):
    _WORK["samples"] = samples
    _WORK["truth"] = truth
    _WORK["distractors"] = distractors
    _WORK["dim"] = dim


def _score_candidate(params: Params) -> tuple[float, float]:
    t0 = time.perf_counter()
    db = ClusterDatabase(_WORK["dim"], params)
    for sample in _WORK["samples"]:
        process_sample(db, sample)
    pred = extract_identities(db)
    _, _, f = bcubed(pred, _WORK["truth"], ignore=_WORK["distractors"])
    return f, time.perf_counter() - t0


def _run_batch(candidates: list[Params], cfg: TuneConfig, phase: str,
               round_no: int) -> list[Evaluation]:
    if cfg.parallel_workers > 1 and len(candidates) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            processes=cfg.parallel_workers,
            initializer=_init_worker,
            initargs=(_WORK["samples"], _WORK["truth"], _WORK["distractors"], _WORK["dim"]),
        ) as pool:
            chunk = max(1, len(candidates) // (cfg.parallel_workers * 8))
            scored = pool.map(_score_candidate, candidates, chunksize=chunk)
    else:
        scored = [_score_candidate(p) for p in candidates]
    return [
        Evaluation(params=p, score=s, runtime_s=rt, phase=phase, round=round_no)
        for p, (s, rt) in zip(candidates, scored)
    ]


def _best(evaluations: list[Evaluation]) -> Evaluation:
    # max score; ties by smaller thr_f, then thr_wc, then thr_sc, ns_r, nc_r
    return min(
        evaluations,
        key=lambda e: (-e.score, e.params.thr_f, e.params.thr_wc, e.params.thr_sc,
                       e.params.ns_r, e.params.nc_r),
    )


def _install_training_set(samples: Sequence[Sample], labels: Mapping[int, int],
                          distractors: AbstractSet[int]) -> None:
    if not samples:
        raise EmptyTrainingSet("no training samples")
    evaluated = [s.id for s in samples if s.id not in distractors]
    if not evaluated:
        raise EmptyTrainingSet("all training samples are distractors")
    missing = [sid for sid in evaluated if sid not in labels]
    if missing:
        raise MissingTruthLabel(
            f"{len(missing)} training sample ids lack labels (first: {missing[:3]})"
        )
    truth = IdentityPartition.from_labels({sid: labels[sid] for sid in evaluated})
    _init_worker(list(samples), truth, frozenset(distractors), samples[0].dim)


def _ordered_triples(sc_vals, f_vals, wc_vals) -> list[Params]:
    out = []
    for sc in sc_vals:
        for f in f_vals:
            if f < sc:
                continue
            for wc in wc_vals:
                if wc < f:
                    continue
                out.append(Params(thr_f=f, thr_wc=wc, thr_sc=sc,
                                  ns_r=PHASE1_NS_R, nc_r=PHASE1_NC_R))
    return out


def feasible_lattice_size(n_values: int) -> int:
    """Number of ordered triples (sc <= f <= wc) over n grid values."""
    return n_values * (n_values + 1) * (n_values + 2) // 6


def tune_thresholds(samples: Sequence[Sample], labels: Mapping[int, int],
                    cfg: TuneConfig,
                    distractors: AbstractSet[int] = frozenset()) -> ThresholdSearchResult:
    """Phase 1: iterative halving grid-search over the three thresholds.

    ns_r and nc_r stay fixed at 4 and 10 during this phase.
    """
    _install_training_set(samples, labels, distractors)
    steps = cfg.step_sequence

    n = int(math.floor((cfg.threshold_hi - cfg.threshold_lo) / cfg.initial_step + 1e-9)) + 1
    values = [cfg.threshold_lo + i * cfg.initial_step for i in range(n)]
    candidates = _ordered_triples(values, values, values)
    assert len(candidates) == feasible_lattice_size(n)

    evaluations = _run_batch(candidates, cfg, "thresholds", 1)
    round_counts = [len(candidates)]
    incumbent = _best(evaluations)

    for round_no, step in enumerate(steps[1:], start=2):
        inc = incumbent.params

        def refine(center: float) -> list[float]:
            vals = {center + k * step for k in (-2, -1, 0, 1, 2)}
            return sorted(v for v in vals
                          if cfg.threshold_lo - 1e-12 <= v <= cfg.threshold_hi + 1e-12)

        candidates = _ordered_triples(refine(inc.thr_sc), refine(inc.thr_f),
                                      refine(inc.thr_wc))
        batch = _run_batch(candidates, cfg, "thresholds", round_no)
        evaluations.extend(batch)
        round_counts.append(len(candidates))
        incumbent = _best([incumbent, *batch])

    return ThresholdSearchResult(
        thr_f=incumbent.params.thr_f,
        thr_wc=incumbent.params.thr_wc,
        thr_sc=incumbent.params.thr_sc,
        score=incumbent.score,
        step_sequence=steps,
        round_counts=round_counts,
        evaluations=evaluations,
    )


def tune_robustness(samples: Sequence[Sample], labels: Mapping[int, int],
                    thresholds: tuple[float, float, float], cfg: TuneConfig,
                    distractors: AbstractSet[int] = frozenset()) -> RobustnessSearchResult:
    """Phase 2: single grid over (ns_r, nc_r) with frozen thresholds."""
    _install_training_set(samples, labels, distractors)
    thr_f, thr_wc, thr_sc = thresholds
    candidates = [
        Params(thr_f=thr_f, thr_wc=thr_wc, thr_sc=thr_sc, ns_r=ns, nc_r=nc)
        for ns in range(cfg.ns_r_range[0], cfg.ns_r_range[1] + 1)
        for nc in cfg.nc_r_values
    ]
    evaluations = _run_batch(candidates, cfg, "robustness", 1)
    best = _best(evaluations)
    return RobustnessSearchResult(
        ns_r=best.params.ns_r,
        nc_r=best.params.nc_r,
        score=best.score,
        evaluations=evaluations,
    )


def tune(samples: Sequence[Sample], labels: Mapping[int, int], cfg: TuneConfig,
         distractors: AbstractSet[int] = frozenset()) -> TuneResult:
    """Run both phases and return the tuned Params with the full trace."""
    phase1 = tune_thresholds(samples, labels, cfg, distractors)
    phase2 = tune_robustness(samples, labels,
                             (phase1.thr_f, phase1.thr_wc, phase1.thr_sc),
                             cfg, distractors)
    params = Params(thr_f=phase1.thr_f, thr_wc=phase1.thr_wc, thr_sc=phase1.thr_sc,
                    ns_r=phase2.ns_r, nc_r=phase2.nc_r)
    return TuneResult(params=params, score=phase2.score,
                      thresholds=phase1, robustness=phase2)
