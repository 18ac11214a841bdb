"""Shared test oracles and invariant checkers.

Everything here is deliberately independent of the package's internal
implementation paths: naive quadratic metrics, BFS components, pure-Python
distance loops.
"""

from __future__ import annotations

import math

import numpy as np

from streamclust.core import ClusterDatabase, Params, Sample

THRESHOLD_EPS = 1e-9


# -- oracles ------------------------------------------------------------------


def naive_bcubed(pred: dict[int, int], truth: dict[int, int],
                 ignore=frozenset()) -> tuple[float, float, float]:
    """O(n^2) per-item BCubed straight from the definition."""
    items = [i for i in pred if i not in ignore]
    if not items:
        return 0.0, 0.0, 0.0
    p_total = r_total = 0.0
    for i in items:
        cluster_peers = [j for j in items if pred[j] == pred[i]]
        label_peers = [j for j in items if truth[j] == truth[i]]
        same = sum(1 for j in cluster_peers if truth[j] == truth[i])
        p_total += same / len(cluster_peers)
        r_total += same / len(label_peers)
    p = p_total / len(items)
    r = r_total / len(items)
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def naive_bcubed_matrix(pred: dict[int, int], truth: dict[int, int],
                        ignore=frozenset()) -> tuple[float, float, float]:
    """Vectorized O(n^2) BCubed via pairwise agreement matrices."""
    items = sorted(i for i in pred if i not in ignore)
    if not items:
        return 0.0, 0.0, 0.0
    c = np.array([pred[i] for i in items])
    t = np.array([truth[i] for i in items])
    same_c = c[:, None] == c[None, :]
    same_t = t[:, None] == t[None, :]
    both = (same_c & same_t).sum(axis=1)
    p = float((both / same_c.sum(axis=1)).mean())
    r = float((both / same_t.sum(axis=1)).mean())
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def naive_nmi(pred: dict[int, int], truth: dict[int, int]) -> float:
    """NMI with sqrt normalization, computed from scratch."""
    items = sorted(pred)
    n = len(items)
    if n == 0:
        return 0.0
    from collections import Counter
    pc = Counter(pred[i] for i in items)
    tc = Counter(truth[i] for i in items)
    joint = Counter((pred[i], truth[i]) for i in items)
    hp = -sum((k / n) * math.log(k / n) for k in pc.values())
    ht = -sum((k / n) * math.log(k / n) for k in tc.values())
    groups_p = {}
    groups_t = {}
    for i in items:
        groups_p.setdefault(pred[i], set()).add(i)
        groups_t.setdefault(truth[i], set()).add(i)
    if {frozenset(g) for g in groups_p.values()} == {frozenset(g) for g in groups_t.values()}:
        return 1.0
    if hp <= 0 or ht <= 0:
        return 0.0
    info = sum(
        (k / n) * math.log((k / n) / ((pc[a] / n) * (tc[b] / n)))
        for (a, b), k in joint.items()
    )
    return info / math.sqrt(hp * ht)


def bfs_components(nodes, edges) -> list[set]:
    """Connected components by plain BFS (union-find oracle substitute)."""
    adjacency = {v: set() for v in nodes}
    for a, b in edges:
        adjacency[a].add(b)
        adjacency[b].add(a)
    seen = set()
    components = []
    for v in nodes:
        if v in seen:
            continue
        comp = {v}
        frontier = [v]
        seen.add(v)
        while frontier:
            cur = frontier.pop()
            for nxt in adjacency[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    comp.add(nxt)
                    frontier.append(nxt)
        components.append(comp)
    return components


def python_distances(mat: np.ndarray, q: np.ndarray) -> list[float]:
    """Pure-Python serial reference for the distance kernel (exact bits)."""
    out = []
    for k in range(mat.shape[0]):
        acc = 0.0
        for d in range(mat.shape[1]):
            diff = float(mat[k, d]) - float(q[d])
            acc += diff * diff
        r = math.sqrt(acc)
        out.append(r if r < 2.0 else 2.0)
    return out


def cos_identity_distance(u: np.ndarray, v: np.ndarray) -> float:
    """sqrt(2 * (1 - cos_sim)) computed in float64, the cross-check identity."""
    u64 = np.asarray(u, dtype=np.float64)
    v64 = np.asarray(v, dtype=np.float64)
    cos = float(np.dot(u64, v64) / (np.linalg.norm(u64) * np.linalg.norm(v64)))
    return math.sqrt(max(0.0, 2.0 * (1.0 - cos)))


# -- invariant checking ---------------------------------------------------------


def check_database_invariants(db: ClusterDatabase, vectors_by_id=None,
                              reconstruction_tol=1e-4) -> None:
    """Assert every core-model invariant on the current database state."""
    p = db.params
    ids = db.live_ids
    assert len(ids) == len(db.clusters) == len(set(ids))
    mat = db.centroid_matrix
    assert mat.shape == (len(ids), db.dim)

    seen_members: set[int] = set()
    for row, cid in enumerate(ids):
        cl = db.clusters[cid]
        assert np.array_equal(mat[row], cl.centroid), f"matrix row desync for {cid}"
        c64 = cl.centroid.astype(np.float64)
        assert abs(np.linalg.norm(c64) - 1.0) <= 1e-5, f"centroid norm off for {cid}"
        ref = cl.feature_sum / np.linalg.norm(cl.feature_sum)
        assert np.max(np.abs(ref - c64)) <= 1e-5, f"centroid != normalized sum for {cid}"
        assert cl.n_samples == len(cl.member_ids) == len(set(cl.member_ids)) >= 1
        assert not seen_members & set(cl.member_ids), "member sets overlap"
        seen_members |= set(cl.member_ids)
    assert seen_members == db.ingested_ids, "partition not exhaustive"

    for cid, cl in db.clusters.items():
        assert cid not in cl.connections, "self loop"
        robust = cl.is_robust(p.ns_r)
        if robust:
            assert len(cl.connections) <= p.nc_r, f"cap exceeded on {cid}"
        else:
            assert len(cl.connections) <= 1, f"non-robust degree > 1 on {cid}"
        for peer_id, stored in cl.connections.items():
            peer = db.clusters[peer_id]
            assert peer.connections.get(cid) == stored, "asymmetric connection"
            from streamclust.core import euclidean_distance
            d = euclidean_distance(cl.centroid, peer.centroid)
            assert abs(d - stored) <= THRESHOLD_EPS, "stale stored distance"
            peer_robust = peer.is_robust(p.ns_r)
            if robust and peer_robust:
                assert d <= p.thr_sc + THRESHOLD_EPS, "robust-robust beyond thr_sc"
            elif robust != peer_robust:
                assert d <= p.thr_wc + THRESHOLD_EPS, "mixed pair beyond thr_wc"
            else:
                raise AssertionError("two non-robust clusters connected")

    if vectors_by_id is not None:
        for cl in db.clusters.values():
            recon = np.zeros(db.dim, dtype=np.float64)
            for sid in cl.member_ids:
                recon += vectors_by_id[sid].astype(np.float64)
            assert np.max(np.abs(recon - cl.feature_sum)) <= reconstruction_tol


def check_fusion_coherence(db: ClusterDatabase) -> None:
    """No pair of live clusters that is not both-robust sits below thr_f."""
    from streamclust.core import euclidean_distance
    p = db.params
    ids = list(db.clusters)
    for i, a in enumerate(ids):
        ca = db.clusters[a]
        for b in ids[i + 1:]:
            cb = db.clusters[b]
            if ca.is_robust(p.ns_r) and cb.is_robust(p.ns_r):
                continue
            d = euclidean_distance(ca.centroid, cb.centroid)
            assert d >= p.thr_f - THRESHOLD_EPS, (
                f"unfused pair {a},{b} at distance {d} < thr_f {p.thr_f}"
            )


# -- stream builders ------------------------------------------------------------


def default_params(**overrides) -> Params:
    base = dict(thr_f=1.01, thr_wc=1.12, thr_sc=0.99, ns_r=5, nc_r=5)
    base.update(overrides)
    return Params(**base)


def unit_at_distance(base: np.ndarray, distance: float,
                     direction: np.ndarray) -> np.ndarray:
    """Unit vector at (approximately, to float32) the given chordal distance
    from unit `base`, moved toward the tangent component of `direction`."""
    t = direction - (direction @ base) * base
    t = t / np.linalg.norm(t)
    theta = 2.0 * math.asin(min(distance, 2.0) / 2.0)
    return math.cos(theta) * base + math.sin(theta) * t


def ingest_stream(db: ClusterDatabase, vectors, start_id=0, process=None):
    """Feed vectors through the engine; returns the reports."""
    from streamclust.engine import process_sample
    step = process or process_sample
    reports = []
    for offset, vec in enumerate(vectors):
        reports.append(step(db, Sample.ingest(start_id + offset, vec)))
    return reports
