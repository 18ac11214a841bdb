"""Brute-force distance kernel: one query against every live centroid.

The kernel is data-parallel across centroid rows and returns complete
results synchronously. Output is bit-identical for any thread count because
each row is reduced by the same fixed-order scalar recipe; only the
min-selection is a cross-row reduction, and its tie-break (smaller cluster
id) cannot depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Set

import numpy as np

from . import _accel
from .core import ClusterDatabase
from .errors import DimensionMismatch


@dataclass(frozen=True)
class NeighborHit:
    cluster_id: int
    distance: float


def _as_query(db: ClusterDatabase, query: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float32)
    if q.shape != (db.dim,):
        raise DimensionMismatch(
            f"query shape {q.shape} does not match database dim {db.dim}"
        )
    return q


def distances_to_all(db: ClusterDatabase, query: np.ndarray) -> np.ndarray:
    """Distances from the query to every live centroid, in live-row order.

    An empty database yields an empty vector.
    """
    q = _as_query(db, query)
    return _accel.unit_distances(db.centroid_matrix, q)


def nearest(db: ClusterDatabase, query: np.ndarray,
            exclude: Set[int] = frozenset()) -> NeighborHit | None:
    """Minimum-distance live cluster not in `exclude`; ties go to the
    smaller cluster id. None when nothing is eligible."""
    dists = distances_to_all(db, query)
    ids = db.live_ids
    if exclude:
        keep = np.fromiter((cid not in exclude for cid in ids), dtype=bool,
                           count=len(ids))
        if not keep.any():
            return None
        masked = np.where(keep, dists, np.inf)
    else:
        if dists.size == 0:
            return None
        masked = dists
    dmin = masked.min()
    rows = np.flatnonzero(masked == dmin)
    best = min(ids[r] for r in rows)
    return NeighborHit(cluster_id=best, distance=float(dmin))


def next_nearest_iter(db: ClusterDatabase, query: np.ndarray,
                      exclude: Set[int] = frozenset(),
                      bound: float | None = None) -> Iterator[NeighborHit]:
    """Yield live clusters in ascending (distance, id) order.

    The distances snapshot the database at creation time; the engine
    discards and recreates the iterator after any fusion. With `bound` set,
    clusters farther than the bound are never yielded (the engine's stop
    rule makes them unobservable anyway, and skipping the full sort keeps
    the hot path cheap).
    """
    dists = distances_to_all(db, query)
    ids = np.asarray(db.live_ids, dtype=np.int64)
    if exclude:
        keep = np.fromiter((cid not in exclude for cid in ids), dtype=bool,
                           count=len(ids))
        dists, ids = dists[keep], ids[keep]
    if bound is not None:
        within = dists <= bound
        dists, ids = dists[within], ids[within]
    order = np.lexsort((ids, dists))

    def _gen():
        for r in order:
            yield NeighborHit(cluster_id=int(ids[r]), distance=float(dists[r]))

    return _gen()
