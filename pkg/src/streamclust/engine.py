"""Two-stage online clustering engine.

Stage 1 places one incoming sample: fuse it into the nearest cluster when
the distance beats the fusion threshold, otherwise open a new cluster
(possibly connecting it to the nearest robust cluster). Whenever an
existing cluster absorbed the sample, stage 2 iteratively tries to fuse or
connect that cluster against the rest of the database, then revalidates the
connection graph.

Connection rules enforced throughout:
  - a non-robust cluster holds at most one connection, and only to a robust
    cluster;
  - two robust clusters are never fused (they connect within thr_sc);
  - a robust cluster holds at most nc_r connections; beyond the cap the
    weakest (largest stored distance) go first.

Fusion comparisons are strict (d < thr_f); connection comparisons are
inclusive with a 1e-9 epsilon so float noise at the exact boundary cannot
flip a decision.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from . import _accel
from .core import ClusterDatabase, Sample
from .errors import DuplicateSample
from .kernel import nearest, next_nearest_iter

EPS = 1e-9

ACTION_FUSED = "fused_into_existing"
ACTION_NEW = "created_new"
ACTION_NEW_CONNECTED = "created_new_connected"


@dataclass
class EngineEventReport:
    """What one process_sample event did, plus its latency."""

    sample_id: int
    action: str
    touched_cluster_ids: list[int]
    fusions_performed: int
    connections_added: int
    connections_removed: int
    elapsed_us: float


@dataclass
class ReclusterOutcome:
    """Stage-2 result fragment; cluster_id is the post-fusion survivor."""

    cluster_id: int
    fusions: int = 0
    connections_added: int = 0
    connections_removed: int = 0
    touched: set[int] = field(default_factory=set)


def _check_connections(db: ClusterDatabase, cluster_id: int) -> tuple[int, set[int]]:
    """Revalidate one cluster's connections; returns (removed, peers seen)."""
    p = db.params
    cl = db.cluster(cluster_id)
    removed = 0
    affected: set[int] = set()
    cl_robust = cl.is_robust(p.ns_r)

    for peer_id, _stored in cl.connection_pairs():
        peer = db.clusters[peer_id]
        affected.add(peer_id)
        d = _accel.unit_pair_distance(cl.centroid, peer.centroid)
        if cl_robust and peer.is_robust(p.ns_r):
            valid = d <= p.thr_sc + EPS
        elif cl_robust != peer.is_robust(p.ns_r):
            valid = d <= p.thr_wc + EPS
        else:
            valid = False  # two non-robust clusters may not stay connected
        if valid:
            db.refresh_connection(cluster_id, peer_id, d)
        else:
            db.disconnect(cluster_id, peer_id)
            removed += 1

    if cl_robust:
        excess = len(cl.connections) - p.nc_r
        if excess > 0:
            victims = sorted(cl.connection_pairs(), key=lambda c: (-c[1], -c[0]))
            for peer_id, _ in victims[:excess]:
                db.disconnect(cluster_id, peer_id)
                affected.add(peer_id)
                removed += 1
    elif len(cl.connections) > 1:
        # transient state after a merge union: keep only the strongest link
        keep_id, _ = min(cl.connection_pairs(), key=lambda c: (c[1], c[0]))
        for peer_id, _ in cl.connection_pairs():
            if peer_id != keep_id:
                db.disconnect(cluster_id, peer_id)
                affected.add(peer_id)
                removed += 1
    return removed, affected


def check_connections(db: ClusterDatabase, cluster_id: int) -> int:
    """Revalidate and re-cap one cluster's connections.

    A connection survives iff (both endpoints robust and d <= thr_sc) or
    (exactly one robust and d <= thr_wc), judged at current centroid
    distances; survivors get their stored distance refreshed. Removals are
    symmetric. Returns the number of connections removed.
    """
    removed, _ = _check_connections(db, cluster_id)
    return removed


def recluster(db: ClusterDatabase, cluster_id: int) -> ReclusterOutcome:
    """Stage 2: iteratively fuse/connect an updated cluster against the rest.

    Candidates arrive in ascending distance. A candidate within thr_f fuses
    unless both clusters are robust (then the merged cluster restarts the
    scan); otherwise an eligible pair connects (robust-robust within thr_sc,
    robust-nonrobust within thr_wc). A robust updated cluster keeps scanning
    after a connection; a non-robust one stops at its single permitted link.
    The scan stops beyond thr_wc, past which nothing can fuse or connect.
    """
    p = db.params
    out = ReclusterOutcome(cluster_id=cluster_id, touched={cluster_id})
    db.cluster(cluster_id)

    cid = cluster_id
    done = False
    while not done:
        cl = db.clusters[cid]
        c_rob = cl.is_robust(p.ns_r)
        restarted = False
        for hit in next_nearest_iter(db, cl.centroid, exclude={cid},
                                     bound=p.thr_wc + EPS):
            peer = db.clusters[hit.cluster_id]
            p_rob = peer.is_robust(p.ns_r)

            if hit.distance < p.thr_f and not (c_rob and p_rob):
                absorbed_peers = set(peer.connections)
                survivor = db.merge_cluster_state(cid, hit.cluster_id)
                out.fusions += 1
                out.touched |= {cid, hit.cluster_id, survivor.id}
                out.touched |= absorbed_peers
                cid = survivor.id
                removed, affected = _check_connections(db, cid)
                out.connections_removed += removed
                out.touched |= affected
                restarted = True
                break

            if hit.cluster_id in cl.connections:
                continue  # reconnecting is a no-op; validity is re-checked below

            if c_rob and p_rob:
                if hit.distance <= p.thr_sc + EPS:
                    db.connect(cid, hit.cluster_id, hit.distance)
                    out.connections_added += 1
                    out.touched.add(hit.cluster_id)
                # robust updated cluster: advance to the next minimum
            elif c_rob != p_rob:
                nonrobust = peer if c_rob else cl
                if hit.distance <= p.thr_wc + EPS and not nonrobust.connections:
                    db.connect(cid, hit.cluster_id, hit.distance)
                    out.connections_added += 1
                    out.touched.add(hit.cluster_id)
                    if not c_rob:
                        done = True  # single permitted connection taken
                        break
            # two non-robust clusters beyond thr_f stay unrelated

        if not restarted:
            done = True

    removed, affected = _check_connections(db, cid)
    out.connections_removed += removed
    out.touched |= affected
    for peer_id in list(db.clusters[cid].connections):
        removed, affected = _check_connections(db, peer_id)
        out.connections_removed += removed
        out.touched |= affected
        out.touched.add(peer_id)

    out.cluster_id = cid
    return out


def _process(db: ClusterDatabase, sample: Sample, run_stage2: bool) -> EngineEventReport:
    t0 = time.perf_counter_ns()
    db.check_dim(sample.vector)
    if sample.id in db.ingested_ids:
        raise DuplicateSample(f"sample id {sample.id} already ingested")
    p = db.params
    touched: set[int] = set()
    fusions = added = removed = 0

    hit = nearest(db, sample.vector)
    if hit is not None and hit.distance < p.thr_f:
        db.add_sample_to_cluster(hit.cluster_id, sample)
        action = ACTION_FUSED
        touched.add(hit.cluster_id)
        if run_stage2:
            out = recluster(db, hit.cluster_id)
            fusions = out.fusions
            added = out.connections_added
            removed = out.connections_removed
            touched |= out.touched
    else:
        new = db.create_cluster(sample)
        touched.add(new.id)
        action = ACTION_NEW
        if hit is not None:
            peer = db.clusters[hit.cluster_id]
            if peer.is_robust(p.ns_r) and hit.distance <= p.thr_wc + EPS:
                db.connect(new.id, hit.cluster_id, hit.distance)
                added += 1
                touched.add(hit.cluster_id)
                action = ACTION_NEW_CONNECTED
                r, affected = _check_connections(db, hit.cluster_id)
                removed += r
                touched |= affected

    elapsed_us = (time.perf_counter_ns() - t0) / 1e3
    return EngineEventReport(
        sample_id=sample.id,
        action=action,
        touched_cluster_ids=sorted(touched),
        fusions_performed=fusions,
        connections_added=added,
        connections_removed=removed,
        elapsed_us=elapsed_us,
    )


def process_sample(db: ClusterDatabase, sample: Sample) -> EngineEventReport:
    """Run the full two-stage pipeline for one sample."""
    return _process(db, sample, run_stage2=True)


def process_sample_stage1_only(db: ClusterDatabase, sample: Sample) -> EngineEventReport:
    """Run stage 1 only (no reclustering pass); the ablation toggle."""
    return _process(db, sample, run_stage2=False)
