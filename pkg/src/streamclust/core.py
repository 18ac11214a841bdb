"""Domain model: samples, parameters, clusters, and the cluster database.

All stored vectors (sample vectors, centroids) are single-precision unit
vectors; running feature sums are kept in double precision so that millions
of additions cannot drift the centroid. Distances everywhere use the single
recipe from :mod:`streamclust._accel`, which keeps every comparison in the
engine self-consistent to the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from . import _accel
from .errors import (
    DimensionMismatch,
    DuplicateMembership,
    DuplicateSample,
    RobustPairFusion,
    UnknownCluster,
    ZeroVector,
)

ZERO_NORM = 1e-12


def normalize(vector: np.ndarray) -> np.ndarray:
    """Return the unit-norm float64 vector with the same direction.

    Raises ZeroVector when the norm is at or below 1e-12, which signals an
    unusable embedding; callers must reject the sample.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM:
        raise ZeroVector(f"vector norm {norm!r} is too small to normalize")
    return v / norm


def unit32(vector: np.ndarray) -> np.ndarray:
    """Normalize and round to the single-precision storage format."""
    return normalize(vector).astype(np.float32)


def euclidean_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Euclidean distance between two unit vectors, in [0, 2].

    Operands are treated in single precision (the storage format); the
    result equals sqrt(2 * (1 - cos_sim(u, v))) to within 1e-6.
    """
    u32 = np.ascontiguousarray(u, dtype=np.float32)
    v32 = np.ascontiguousarray(v, dtype=np.float32)
    if u32.shape != v32.shape:
        raise DimensionMismatch(f"shapes {u32.shape} and {v32.shape} differ")
    return _accel.unit_pair_distance(u32, v32)


@dataclass(frozen=True, eq=False)
class Sample:
    """One incoming embedding: a stable id plus a unit float32 vector."""

    id: int
    vector: np.ndarray

    @classmethod
    def ingest(cls, sample_id: int, vector: np.ndarray) -> "Sample":
        """Build a Sample, normalizing the vector instead of trusting it."""
        if sample_id < 0:
            raise ValueError(f"sample id must be non-negative, got {sample_id}")
        return cls(id=int(sample_id), vector=unit32(vector))

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class Params:
    """The five tunable values governing fusion and connection decisions.

    thr_f, thr_wc, thr_sc are euclidean distances in [0, 2]; the enforced
    ordering is thr_sc <= thr_f <= thr_wc, which every known-good tuned set
    obeys. ns_r is the minimum sample count for a cluster to count as
    robust; nc_r caps the connections of a robust cluster.
    """

    thr_f: float
    thr_wc: float
    thr_sc: float
    ns_r: int
    nc_r: int

    def __post_init__(self):
        for name in ("thr_f", "thr_wc", "thr_sc"):
            val = getattr(self, name)
            if not 0.0 <= val <= 2.0:
                raise ValueError(f"{name}={val} outside [0, 2]")
        if not self.thr_sc <= self.thr_f <= self.thr_wc:
            raise ValueError(
                f"threshold ordering violated: need thr_sc <= thr_f <= thr_wc, "
                f"got sc={self.thr_sc} f={self.thr_f} wc={self.thr_wc}"
            )
        if self.ns_r < 1:
            raise ValueError(f"ns_r must be >= 1, got {self.ns_r}")
        if self.nc_r < 1:
            raise ValueError(f"nc_r must be >= 1, got {self.nc_r}")


class Cluster:
    """One gaussian mode of an identity.

    Holds the unit centroid, the double-precision running feature sum, the
    ordered member sample ids, and the connection map (peer cluster id ->
    stored centroid distance).
    """

    __slots__ = ("id", "feature_sum", "centroid", "member_ids", "connections", "_members")

    def __init__(self, cluster_id: int, feature_sum: np.ndarray, centroid: np.ndarray,
                 member_ids: Iterable[int]):
        self.id = int(cluster_id)
        self.feature_sum = feature_sum
        self.centroid = centroid
        self.member_ids: list[int] = list(member_ids)
        self._members = set(self.member_ids)
        self.connections: dict[int, float] = {}

    @property
    def n_samples(self) -> int:
        return len(self.member_ids)

    def is_robust(self, ns_r: int) -> bool:
        return len(self.member_ids) >= ns_r

    def has_member(self, sample_id: int) -> bool:
        return sample_id in self._members

    def connection_pairs(self) -> list[tuple[int, float]]:
        return list(self.connections.items())

    def __repr__(self):
        return (f"Cluster(id={self.id}, n={self.n_samples}, "
                f"conns={sorted(self.connections)})")


class ClusterDatabase:
    """The evolving cluster set plus the dense centroid matrix.

    The matrix holds the live centroids contiguously (row-major float32);
    appends grow capacity geometrically and deletions swap the last row in,
    with an id <-> row indirection keeping the mapping. Row k is always
    bit-identical to the stored centroid of the cluster occupying row k.

    One writer at a time; concurrent readers are safe between engine events.
    """

    def __init__(self, dim: int, params: Params):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = int(dim)
        self.params = params
        self.clusters: dict[int, Cluster] = {}
        self.ingested_ids: set[int] = set()
        self.next_cluster_id = 0
        self._matrix = np.zeros((16, self.dim), dtype=np.float32)
        self._row_of: dict[int, int] = {}
        self._ids_by_row: list[int] = []

    # -- views ------------------------------------------------------------

    @property
    def n_clusters(self) -> int:
        return len(self._ids_by_row)

    @property
    def n_ingested(self) -> int:
        return len(self.ingested_ids)

    @property
    def centroid_matrix(self) -> np.ndarray:
        """Dense K x D float32 matrix of live centroids, in live-row order."""
        return self._matrix[: len(self._ids_by_row)]

    @property
    def live_ids(self) -> tuple[int, ...]:
        """Cluster ids in live-row order (matches centroid_matrix rows)."""
        return tuple(self._ids_by_row)

    def cluster(self, cluster_id: int) -> Cluster:
        try:
            return self.clusters[cluster_id]
        except KeyError:
            raise UnknownCluster(f"no live cluster with id {cluster_id}") from None

    def iter_clusters(self) -> Iterator[Cluster]:
        return iter(self.clusters.values())

    # -- mutation ---------------------------------------------------------

    def check_dim(self, vector: np.ndarray) -> None:
        if vector.shape != (self.dim,):
            raise DimensionMismatch(
                f"vector shape {vector.shape} does not match database dim {self.dim}"
            )

    def create_cluster(self, sample: Sample) -> Cluster:
        """Open a new singleton cluster around the sample.

        The centroid is recomputed from the feature sum (not aliased to the
        sample vector) so that a snapshot/restore cycle, which rebuilds
        centroids from sums, reproduces it bit for bit.
        """
        self.check_dim(sample.vector)
        if sample.id in self.ingested_ids:
            raise DuplicateSample(f"sample id {sample.id} already ingested")
        feature_sum = sample.vector.astype(np.float64)
        cluster = Cluster(
            self.next_cluster_id,
            feature_sum=feature_sum,
            centroid=unit32(feature_sum),
            member_ids=(sample.id,),
        )
        self.next_cluster_id += 1
        self.clusters[cluster.id] = cluster
        self.ingested_ids.add(sample.id)
        self._append_row(cluster)
        return cluster

    def add_sample_to_cluster(self, cluster_id: int, sample: Sample) -> Cluster:
        """Fuse a sample into a live cluster, recomputing the centroid.

        Connections are left untouched; revalidating them is the engine's
        job.
        """
        cluster = self.cluster(cluster_id)
        self.check_dim(sample.vector)
        if sample.id in self.ingested_ids or cluster.has_member(sample.id):
            raise DuplicateSample(f"sample id {sample.id} already ingested")
        cluster.feature_sum += sample.vector.astype(np.float64)
        cluster.member_ids.append(sample.id)
        cluster._members.add(sample.id)
        self.ingested_ids.add(sample.id)
        self._refresh_centroid(cluster)
        return cluster

    def merge_cluster_state(self, id_a: int, id_b: int) -> Cluster:
        """Fuse two live clusters; the smaller id survives.

        Feature sums add, member lists concatenate, and the connection lists
        union (the mutual link, if any, disappears; peers of the absorbed
        cluster are repointed at the survivor). The union is raw: the caller
        must re-run the connection rules afterwards.
        """
        if id_a == id_b:
            raise ValueError(f"cannot merge cluster {id_a} with itself")
        a, b = self.cluster(id_a), self.cluster(id_b)
        ns_r = self.params.ns_r
        if a.is_robust(ns_r) and b.is_robust(ns_r):
            raise RobustPairFusion(
                f"clusters {a.id} and {b.id} are both robust and cannot be fused"
            )
        survivor, absorbed = (a, b) if a.id < b.id else (b, a)
        if not survivor._members.isdisjoint(absorbed._members):
            raise DuplicateMembership(
                f"clusters {survivor.id} and {absorbed.id} share member ids"
            )

        survivor.feature_sum += absorbed.feature_sum
        survivor.member_ids.extend(absorbed.member_ids)
        survivor._members.update(absorbed._members)

        if absorbed.id in survivor.connections:
            del survivor.connections[absorbed.id]
            del absorbed.connections[survivor.id]
        for peer_id, dist in absorbed.connection_pairs():
            peer = self.clusters[peer_id]
            del peer.connections[absorbed.id]
            if peer_id in survivor.connections:
                kept = min(survivor.connections[peer_id], dist)
                survivor.connections[peer_id] = kept
                peer.connections[survivor.id] = kept
            else:
                survivor.connections[peer_id] = dist
                peer.connections[survivor.id] = dist
        absorbed.connections.clear()

        self._drop_cluster(absorbed.id)
        self._refresh_centroid(survivor)
        return survivor

    # -- connections ------------------------------------------------------

    def connected(self, id_a: int, id_b: int) -> bool:
        return id_b in self.cluster(id_a).connections

    def connect(self, id_a: int, id_b: int, distance: float) -> None:
        if id_a == id_b:
            raise ValueError(f"cluster {id_a} cannot connect to itself")
        a, b = self.cluster(id_a), self.cluster(id_b)
        if id_b in a.connections:
            raise ValueError(f"clusters {id_a} and {id_b} are already connected")
        a.connections[id_b] = float(distance)
        b.connections[id_a] = float(distance)

    def disconnect(self, id_a: int, id_b: int) -> None:
        a, b = self.cluster(id_a), self.cluster(id_b)
        del a.connections[id_b]
        del b.connections[id_a]

    def refresh_connection(self, id_a: int, id_b: int, distance: float) -> None:
        a, b = self.cluster(id_a), self.cluster(id_b)
        a.connections[id_b] = float(distance)
        b.connections[id_a] = float(distance)

    # -- internals ----------------------------------------------------------

    def _refresh_centroid(self, cluster: Cluster) -> None:
        cluster.centroid = unit32(cluster.feature_sum)
        row = self._row_of[cluster.id]
        self._matrix[row, :] = cluster.centroid

    def _append_row(self, cluster: Cluster) -> None:
        k = len(self._ids_by_row)
        if k == self._matrix.shape[0]:
            grown = np.zeros((2 * k, self.dim), dtype=np.float32)
            grown[:k] = self._matrix[:k]
            self._matrix = grown
        self._matrix[k, :] = cluster.centroid
        self._row_of[cluster.id] = k
        self._ids_by_row.append(cluster.id)

    def _drop_cluster(self, cluster_id: int) -> None:
        row = self._row_of.pop(cluster_id)
        last = len(self._ids_by_row) - 1
        if row != last:
            moved_id = self._ids_by_row[last]
            self._matrix[row, :] = self._matrix[last, :]
            self._ids_by_row[row] = moved_id
            self._row_of[moved_id] = row
        self._ids_by_row.pop()
        del self.clusters[cluster_id]
