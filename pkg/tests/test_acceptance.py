"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The long-running criteria
budget their own wall time; the whole suite finishes in ~10 minutes on a
2-core box.
"""

import json
import os
import time

import numpy as np
import pytest

from streamclust.cli import main as cli_main
from streamclust.core import ClusterDatabase, Params, Sample
from streamclust.engine import (
    ACTION_NEW_CONNECTED,
    process_sample,
    process_sample_stage1_only,
)
from streamclust.fileio import (
    read_vectors,
    shuffle_order,
    snapshot,
    write_labels,
    write_vectors,
)
from streamclust.metrics import (
    IdentityPartition,
    bcubed,
    extract_identities,
    nmi,
)
from streamclust.synth import SynthConfig, generate
from streamclust.tuner import TuneConfig, tune

from helpers import (
    THRESHOLD_EPS,
    check_database_invariants,
    naive_bcubed,
    naive_bcubed_matrix,
    naive_nmi,
)


def verdict(criterion: int, description: str, passed: bool, detail: str = "") -> None:
    state = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {criterion} ({description}): {state}"
          + (f" [{detail}]" if detail else ""))
    assert passed, f"criterion {criterion} failed: {detail}"


# -- criterion 1: metric oracle equivalence ------------------------------------------


def test_criterion_1_metric_oracles():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    max_err = 0.0
    for trial in range(200):
        n = int(rng.integers(2, 1001))
        k_pred = int(rng.integers(1, 50))
        k_true = int(rng.integers(1, 50))
        pred_labels = {i: int(rng.integers(0, k_pred)) for i in range(n)}
        true_labels = {i: int(rng.integers(0, k_true)) for i in range(n)}
        pred = IdentityPartition.from_labels(pred_labels)
        truth = IdentityPartition.from_labels(true_labels)

        got = bcubed(pred, truth)
        want = naive_bcubed_matrix(pred_labels, true_labels)
        max_err = max(max_err, *(abs(g - w) for g, w in zip(got, want)))
        got_nmi = nmi(pred, truth)
        want_nmi = naive_nmi(pred_labels, true_labels)
        max_err = max(max_err, abs(got_nmi - want_nmi))
        if trial % 40 == 0:  # cross-check the matrix oracle with the pure loop
            small = {i: pred_labels[i] for i in range(min(n, 120))}
            small_t = {i: true_labels[i] for i in range(min(n, 120))}
            a = naive_bcubed(small, small_t)
            b = naive_bcubed_matrix(small, small_t)
            assert np.allclose(a, b, atol=1e-12)
    elapsed = time.perf_counter() - t0
    verdict(1, "BCubed/NMI vs naive quadratic oracles", max_err <= 1e-9 and elapsed < 60,
            f"max_err={max_err:.2e}, {elapsed:.1f}s over 200 pairs")


# -- criterion 2: engine rule soundness ----------------------------------------------


class SoundnessMonitor:
    """Per-event rule checking.

    Events only mutate the clusters they report as touched, so checking the
    touched neighborhood after every event plus a periodic full invariant
    sweep is equivalent to a full check per event; the sweeps (every 500
    events and at stream end) also catch any unreported mutation.
    """

    def __init__(self, db: ClusterDatabase):
        self.db = db
        self.events = 0
        self.sizes: dict[int, int] = {}

    def after_event(self, report):
        db, p = self.db, self.db.params
        self.events += 1
        assert db.n_ingested == self.events, "partition lost a sample"
        if report.action == ACTION_NEW_CONNECTED:
            assert report.connections_added >= 1
        for cid in report.touched_cluster_ids:
            cl = db.clusters.get(cid)
            if cl is None:
                continue  # absorbed during the event
            row = db._row_of[cid]
            assert np.array_equal(db.centroid_matrix[row], cl.centroid)
            c64 = cl.centroid.astype(np.float64)
            assert abs(np.linalg.norm(c64) - 1.0) <= 1e-5
            assert cl.n_samples >= self.sizes.get(cid, 0), "cluster shrank"
            self.sizes[cid] = cl.n_samples
            robust = cl.is_robust(p.ns_r)
            if robust:
                assert len(cl.connections) <= p.nc_r
            else:
                assert len(cl.connections) <= 1
            from streamclust.core import euclidean_distance
            for peer_id, stored in cl.connections.items():
                peer = db.clusters[peer_id]
                assert peer.connections.get(cid) == stored
                d = euclidean_distance(cl.centroid, peer.centroid)
                assert abs(d - stored) <= THRESHOLD_EPS
                if robust and peer.is_robust(p.ns_r):
                    assert d <= p.thr_sc + THRESHOLD_EPS
                elif robust != peer.is_robust(p.ns_r):
                    assert d <= p.thr_wc + THRESHOLD_EPS
                else:
                    raise AssertionError("two non-robust clusters connected")
        if self.events % 500 == 0:
            check_database_invariants(db)  # reconstruction re-checked at stream end


PARAM_ROTATION = [
    Params(thr_f=1.01, thr_wc=1.12, thr_sc=0.99, ns_r=5, nc_r=5),
    Params(thr_f=0.95, thr_wc=1.10, thr_sc=0.90, ns_r=3, nc_r=2),
    Params(thr_f=1.05, thr_wc=1.15, thr_sc=1.05, ns_r=6, nc_r=10),
]


def test_criterion_2_rule_soundness():
    t0 = time.perf_counter()
    total_events = 0
    for stream in range(100):
        rng = np.random.default_rng(1000 + stream)
        cfg = SynthConfig(
            n_identities=int(rng.integers(30, 120)),
            n_samples=10_000,
            dim=64,
            modes_min=1,
            modes_max=3,
            mode_spread=float(rng.uniform(0.35, 0.50)),
            mode_separation=float(rng.uniform(0.80, 1.10)),
            max_identity_dot=0.35,
            seed=2000 + stream,
        )
        vectors, _ = generate(cfg)
        order = shuffle_order(len(vectors), stream)
        params = PARAM_ROTATION[stream % len(PARAM_ROTATION)]
        db = ClusterDatabase(cfg.dim, params)
        monitor = SoundnessMonitor(db)
        vectors_by_id = {}
        for k in order:
            s = Sample(id=int(k), vector=vectors[k].astype(np.float32))
            vectors_by_id[s.id] = s.vector
            report = process_sample(db, s)
            monitor.after_event(report)
        check_database_invariants(db, vectors_by_id=vectors_by_id)
        total_events += monitor.events
    elapsed = time.perf_counter() - t0
    verdict(2, "rule soundness over 100 randomized streams",
            total_events == 1_000_000 and elapsed < 600,
            f"{total_events} events, zero violations, {elapsed:.0f}s")


# -- criteria 3-5: synthetic accuracy, order robustness, ablation ----------------------


@pytest.fixture(scope="module")
def tuned_pipeline():
    cfg = SynthConfig(n_identities=300, n_samples=35_000, dim=64,
                      modes_min=1, modes_max=3, mode_spread=0.40,
                      mode_separation=0.95, max_identity_dot=0.30, seed=11)
    vectors, labels = generate(cfg)
    split = shuffle_order(len(vectors), 424242)
    tune_rows, eval_rows = split[:5_000], split[5_000:]

    tune_samples = [Sample(id=i, vector=vectors[r].astype(np.float32))
                    for i, r in enumerate(tune_rows)]
    tune_labels = {i: int(labels[r]) for i, r in enumerate(tune_rows)}
    t0 = time.perf_counter()
    result = tune(tune_samples, tune_labels,
                  TuneConfig(threshold_lo=0.7, threshold_hi=1.4,
                             parallel_workers=2))
    tune_wall = time.perf_counter() - t0

    eval_vectors = np.stack([vectors[r] for r in eval_rows]).astype(np.float32)
    eval_truth = IdentityPartition.from_labels(
        {i: int(labels[r]) for i, r in enumerate(eval_rows)})

    def run_f(seed: int, stage1: bool = False) -> float:
        db = ClusterDatabase(cfg.dim, result.params)
        step = process_sample_stage1_only if stage1 else process_sample
        for k in shuffle_order(len(eval_vectors), seed):
            step(db, Sample(id=int(k), vector=eval_vectors[k]))
        pred = extract_identities(db)
        return bcubed(pred, eval_truth)[2]

    t0 = time.perf_counter()
    f_seed0 = run_f(0)
    eval_wall = time.perf_counter() - t0
    return {
        "params": result.params,
        "tune_wall": tune_wall,
        "eval_wall": eval_wall,
        "run_f": run_f,
        "f_seed0": f_seed0,
        "n_eval": len(eval_vectors),
    }


def test_criterion_3_synthetic_accuracy(tuned_pipeline):
    tp = tuned_pipeline
    wall = tp["tune_wall"] + tp["eval_wall"]
    verdict(3, "tuned accuracy on 30K/300-identity synthetic stream",
            tp["f_seed0"] >= 0.90 and wall < 300,
            f"F={tp['f_seed0']:.4f} params={tp['params']} wall={wall:.0f}s")


def test_criterion_4_order_robustness(tuned_pipeline):
    tp = tuned_pipeline
    fs = [tp["f_seed0"]] + [tp["run_f"](seed) for seed in range(1, 10)]
    std = float(np.std(fs))
    verdict(4, "F stability across 10 stream orders", std <= 0.02,
            f"mean={np.mean(fs):.4f} std={std:.4f}")


def test_criterion_5_ablation_direction(tuned_pipeline):
    tp = tuned_pipeline
    f_stage1 = tp["run_f"](0, stage1=True)
    gap = tp["f_seed0"] - f_stage1
    verdict(5, "stage-1-only scores below the full method", gap >= 0.02,
            f"full={tp['f_seed0']:.4f} stage1={f_stage1:.4f} gap={gap:.4f}")


# -- criterion 6: scaling shape --------------------------------------------------------


def test_criterion_6_scaling_shape(tmp_path):
    # growth workload: identity samples plus a stream of one-off distractors.
    # Identities saturate the cluster count early; the shuffled distractors
    # keep it growing linearly for the whole run (the latency driver).
    cfg = SynthConfig(n_identities=1_500, n_samples=200_000, dim=128,
                      modes_min=1, modes_max=2, mode_spread=0.35,
                      mode_separation=0.90, max_identity_dot=0.40,
                      distractor_fraction=0.05, seed=21)
    vectors, _ = generate(cfg)
    vec_path = tmp_path / "bench.vec"
    write_vectors(vec_path, vectors.astype(np.float32))
    del vectors

    csv_path = tmp_path / "curve.csv"
    report_path = tmp_path / "bench.json"
    checkpoints = ",".join(str(10_000 * (i + 1)) for i in range(20))
    code = cli_main(["bench", "--vectors_path", str(vec_path),
                     "--params", "0.95,1.05,0.90,5,10",
                     "--checkpoints", checkpoints, "--repeats", "1",
                     "--seed", "3", "--csv_out", str(csv_path),
                     "--report_path", str(report_path)])
    assert code == 0

    rows = [line.split(",") for line in
            csv_path.read_text().strip().splitlines()[1:]]
    latency = np.array([float(r[1]) for r in rows])
    clusters = np.array([float(r[3]) for r in rows])
    pearson = float(np.corrcoef(latency, clusters)[0, 1])

    doc = json.loads(report_path.read_text())
    lat = doc["per_seed"][0]["latency"]
    ratio = lat["max_us"] / lat["p50_us"]
    verdict(6, "latency grows at most linearly with cluster count",
            pearson > 0.9 and ratio < 50,
            f"pearson={pearson:.3f} max/median={ratio:.1f} "
            f"K_final={doc['per_seed'][0]['final_clusters']}")


# -- criterion 7: tuner contract -------------------------------------------------------


def test_criterion_7_tuner_contract():
    rng = np.random.default_rng(3)
    samples, labels = [], {}
    sid = 0
    for ident in range(3):
        base = np.zeros(16)
        base[ident] = 1.0
        for _ in range(8):
            samples.append(Sample.ingest(sid, base + 0.05 * rng.normal(size=16)))
            labels[sid] = ident
            sid += 1
    serial = tune(samples, labels, TuneConfig(parallel_workers=1))
    parallel = tune(samples, labels, TuneConfig(parallel_workers=2))
    steps_ok = serial.thresholds.step_sequence == [0.1, 0.05, 0.025, 0.0125]
    count_ok = (serial.thresholds.round_counts[0] == 1771
                and len(serial.robustness.evaluations) == 20)
    same = serial.params == parallel.params and serial.score == parallel.score
    verdict(7, "tuner step sequence, cell counts, parallel determinism",
            steps_ok and count_ok and same,
            f"steps={serial.thresholds.step_sequence} "
            f"round1={serial.thresholds.round_counts[0]} phase2=20 parallel==serial={same}")


# -- criterion 8: optional external reproduction ----------------------------------------


def test_criterion_8_external_reproduction():
    vec_path = os.environ.get("STREAMCLUST_IJBB_VECTORS")
    lab_path = os.environ.get("STREAMCLUST_IJBB_LABELS")
    if not vec_path or not lab_path:
        print("ACCEPTANCE 8 (IJB-B-1845 reproduction): SKIP "
              "[set STREAMCLUST_IJBB_VECTORS / STREAMCLUST_IJBB_LABELS; see README]")
        pytest.skip("external IJB-B feature files not provided")
    from streamclust.fileio import read_labels
    dim, samples = read_vectors(vec_path)
    labels, distractors = read_labels(lab_path)
    db = ClusterDatabase(dim, Params(thr_f=1.01, thr_wc=1.12, thr_sc=0.99,
                                     ns_r=5, nc_r=5))
    for s in samples:
        process_sample(db, s)
    pred = extract_identities(db)
    truth = IdentityPartition.from_labels(labels)
    _, _, f = bcubed(pred, truth, ignore=distractors)
    anchors = {sid for sid in pred.assignment if sid not in distractors}
    score = nmi(pred.restrict(anchors), truth)
    verdict(8, "IJB-B-1845 reproduction",
            abs(f - 0.822) <= 0.010 and abs(score - 0.921) <= 0.010,
            f"F={f:.4f} NMI={score:.4f}")


# -- criterion 9: determinism & persistence ----------------------------------------------


def test_criterion_9_snapshot_replay(tmp_path):
    cfg = SynthConfig(n_identities=40, n_samples=1_000, dim=64,
                      modes_min=1, modes_max=3, mode_spread=0.40,
                      mode_separation=0.95, max_identity_dot=0.30, seed=33)
    vectors, _ = generate(cfg)
    params = Params(thr_f=1.01, thr_wc=1.12, thr_sc=0.99, ns_r=4, nc_r=5)
    order = shuffle_order(len(vectors), 7)

    full = ClusterDatabase(cfg.dim, params)
    for k in order:
        process_sample(full, Sample(id=int(k), vector=vectors[k].astype(np.float32)))

    half = ClusterDatabase(cfg.dim, params)
    for k in order[:500]:
        process_sample(half, Sample(id=int(k), vector=vectors[k].astype(np.float32)))
    from streamclust.fileio import restore
    resumed = restore(snapshot(half))
    for k in order[500:]:
        process_sample(resumed, Sample(id=int(k), vector=vectors[k].astype(np.float32)))

    blob_equal = snapshot(resumed) == snapshot(full)
    parts_equal = (extract_identities(resumed).assignment
                   == extract_identities(full).assignment)
    from streamclust.fileio import write_assignments
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_assignments(p1, extract_identities(full))
    write_assignments(p2, extract_identities(resumed))
    verdict(9, "snapshot-restore replay equals uninterrupted run bit-exactly",
            blob_equal and parts_equal and p1.read_bytes() == p2.read_bytes(),
            "snapshot blobs, partitions and assignment files all identical")
