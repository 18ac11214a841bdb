"""File formats, database snapshots, and deterministic shuffling.

Vector file (all integers little-endian):

    offset  size  field
    0       4     magic ``OGMV``
    4       2     version, u16 (currently 1)
    6       1     dtype, u8 (0 = IEEE 754 float32)
    7       4     dim, u32
    11      8     count, u64
    19      --    count * dim float32 values, row-major

The file size must equal ``19 + count*dim*4`` exactly; anything else is
rejected. Vectors are normalized on load, and rows containing NaN/Inf or a
(near-)zero norm are rejected.

Label file: text, one ``sample_id,label`` pair per line; ``#`` starts a
comment line. Label ``-1`` marks a distractor (clustered normally, ignored
by metrics).

Assignment file: text CSV ``sample_id,identity_id``, ascending sample id.

Snapshot blob (all little-endian):

    magic ``OGMS`` | version u16 | dim u32 |
    thr_f f64 | thr_wc f64 | thr_sc f64 | ns_r u32 | nc_r u32 |
    next_cluster_id u64 | n_clusters u64 |
    per cluster, ascending id:
        id u64 | n_members u64 | member ids u64 x n (ingestion order) |
        feature_sum f64 x dim |
        n_connections u32 | (peer id u64, distance f64) x n, ascending peer
    blake2b-64 checksum of everything above (8 bytes)

Feature sums are stored at full precision; centroids are recomputed on
restore by the same normalization code the engine uses, so a restored
database behaves bit-identically to the original.

``shuffle_order`` is a Fisher-Yates shuffle driven by the raw 64-bit output
stream of NumPy's PCG64 bit generator (seeded through SeedSequence) with
modulo rejection sampling, which makes permutations reproducible across
platforms and library versions.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Cluster, ClusterDatabase, Params, Sample
from .errors import (
    BadMagic,
    CorruptSnapshot,
    DuplicateId,
    NonFiniteValue,
    ParseError,
    TruncatedFile,
    UnsupportedDtype,
    UnsupportedVersion,
    ZeroVector,
)
from .metrics import IdentityPartition

VECTOR_MAGIC = b"OGMV"
SNAPSHOT_MAGIC = b"OGMS"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sHBIQ")


@dataclass(frozen=True)
class VectorFileHeader:
    magic: bytes
    version: int
    dtype: int
    dim: int
    count: int

    def pack(self) -> bytes:
        return _HEADER.pack(self.magic, self.version, self.dtype, self.dim, self.count)

    @classmethod
    def unpack(cls, raw: bytes) -> "VectorFileHeader":
        if len(raw) < _HEADER.size:
            raise TruncatedFile(f"file too short for header ({len(raw)} bytes)")
        magic, version, dtype, dim, count = _HEADER.unpack_from(raw)
        return cls(magic, version, dtype, dim, count)


def write_vectors(path: str | Path, vectors: np.ndarray) -> None:
    """Write a float32 vector file; rows are stored exactly as given."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError(f"expected a (count, dim) array, got shape {arr.shape}")
    header = VectorFileHeader(VECTOR_MAGIC, FORMAT_VERSION, DTYPE_FLOAT32,
                              arr.shape[1], arr.shape[0])
    with open(path, "wb") as fh:
        fh.write(header.pack())
        fh.write(arr.tobytes())


def read_vectors(path: str | Path) -> tuple[int, list[Sample]]:
    """Read a vector file; samples get ids 0..count-1 in file order.

    Vectors are normalized on load (single-precision storage, matching
    Sample.ingest).
    """
    raw = Path(path).read_bytes()
    header = VectorFileHeader.unpack(raw)
    if header.magic != VECTOR_MAGIC:
        raise BadMagic(f"expected {VECTOR_MAGIC!r}, found {header.magic!r}")
    if header.version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported vector file version {header.version}")
    if header.dtype != DTYPE_FLOAT32:
        raise UnsupportedDtype(f"unsupported element dtype code {header.dtype}")
    if header.dim < 1:
        raise TruncatedFile(f"declared dim {header.dim} is invalid")
    expected = _HEADER.size + header.count * header.dim * 4
    if len(raw) != expected:
        raise TruncatedFile(
            f"file is {len(raw)} bytes but the header declares {expected}"
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    mat = flat.reshape(header.count, header.dim).astype(np.float64)

    finite = np.isfinite(mat).all(axis=1)
    if not finite.all():
        raise NonFiniteValue(int(np.flatnonzero(~finite)[0]))
    norms = np.linalg.norm(mat, axis=1)
    dead = norms <= 1e-12
    if dead.any():
        row = int(np.flatnonzero(dead)[0])
        raise ZeroVector(f"zero-norm vector in row {row}")
    unit = (mat / norms[:, None]).astype(np.float32)
    samples = [Sample(id=i, vector=unit[i].copy()) for i in range(header.count)]
    return header.dim, samples


def write_labels(path: str | Path, labels: dict[int, int]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for sid in sorted(labels):
            fh.write(f"{sid},{labels[sid]}\n")


def read_labels(path: str | Path) -> tuple[dict[int, int], set[int]]:
    """Read a label file; returns (labels, distractor ids).

    Distractors (label -1) appear only in the second set.
    """
    labels: dict[int, int] = {}
    distractors: set[int] = set()
    seen: set[int] = set()
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise ParseError(lineno, f"expected 'sample_id,label', got {text!r}")
            try:
                sid, lab = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(lineno, f"non-integer field in {text!r}") from None
            if sid < 0 or lab < -1:
                raise ParseError(lineno, f"invalid values in {text!r}")
            if sid in seen:
                raise DuplicateId(lineno)
            seen.add(sid)
            if lab == -1:
                distractors.add(sid)
            else:
                labels[sid] = lab
    return labels, distractors


def write_assignments(path: str | Path, partition: IdentityPartition) -> None:
    """Write `sample_id,identity_id` rows, ascending by sample id."""
    with open(path, "w", encoding="ascii") as fh:
        for sid in sorted(partition.assignment):
            fh.write(f"{sid},{partition.assignment[sid]}\n")


def read_assignments(path: str | Path) -> dict[int, int]:
    assignment: dict[int, int] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise ParseError(lineno, f"expected 'sample_id,identity_id', got {text!r}")
            try:
                sid, ident = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(lineno, f"non-integer field in {text!r}") from None
            if sid in assignment:
                raise DuplicateId(lineno)
            assignment[sid] = ident
    return assignment


# -- snapshots --------------------------------------------------------------


def snapshot(db: ClusterDatabase) -> bytes:
    """Serialize the database to a deterministic, checksummed blob."""
    parts = [
        SNAPSHOT_MAGIC,
        struct.pack("<HI", FORMAT_VERSION, db.dim),
        struct.pack("<dddII", db.params.thr_f, db.params.thr_wc, db.params.thr_sc,
                    db.params.ns_r, db.params.nc_r),
        struct.pack("<QQ", db.next_cluster_id, len(db.clusters)),
    ]
    for cid in sorted(db.clusters):
        cluster = db.clusters[cid]
        parts.append(struct.pack("<QQ", cid, len(cluster.member_ids)))
        parts.append(np.asarray(cluster.member_ids, dtype="<u8").tobytes())
        parts.append(cluster.feature_sum.astype("<f8").tobytes())
        conns = sorted(cluster.connections.items())
        parts.append(struct.pack("<I", len(conns)))
        for peer_id, dist in conns:
            parts.append(struct.pack("<Qd", peer_id, dist))
    payload = b"".join(parts)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return payload + digest


def restore(blob: bytes) -> ClusterDatabase:
    """Rebuild a database from a snapshot blob; validates the checksum."""
    if len(blob) < 8:
        raise CorruptSnapshot("snapshot too short")
    payload, digest = blob[:-8], blob[-8:]
    if hashlib.blake2b(payload, digest_size=8).digest() != digest:
        raise CorruptSnapshot("checksum mismatch")
    try:
        return _decode_snapshot(payload)
    except (struct.error, ValueError, IndexError) as exc:
        raise CorruptSnapshot(f"malformed snapshot: {exc}") from None


def _decode_snapshot(payload: bytes) -> ClusterDatabase:
    off = 0
    magic = payload[:4]
    off += 4
    if magic != SNAPSHOT_MAGIC:
        raise CorruptSnapshot(f"expected {SNAPSHOT_MAGIC!r}, found {magic!r}")
    version, dim = struct.unpack_from("<HI", payload, off)
    off += struct.calcsize("<HI")
    if version != FORMAT_VERSION:
        raise CorruptSnapshot(f"unsupported snapshot version {version}")
    thr_f, thr_wc, thr_sc, ns_r, nc_r = struct.unpack_from("<dddII", payload, off)
    off += struct.calcsize("<dddII")
    next_id, n_clusters = struct.unpack_from("<QQ", payload, off)
    off += struct.calcsize("<QQ")

    db = ClusterDatabase(dim, Params(thr_f=thr_f, thr_wc=thr_wc, thr_sc=thr_sc,
                                     ns_r=ns_r, nc_r=nc_r))
    connections: dict[int, list[tuple[int, float]]] = {}
    for _ in range(n_clusters):
        cid, n_members = struct.unpack_from("<QQ", payload, off)
        off += struct.calcsize("<QQ")
        members = np.frombuffer(payload, dtype="<u8", count=n_members, offset=off)
        off += n_members * 8
        feature_sum = np.frombuffer(payload, dtype="<f8", count=dim, offset=off).copy()
        off += dim * 8
        (n_conns,) = struct.unpack_from("<I", payload, off)
        off += 4
        conns = []
        for _ in range(n_conns):
            peer_id, dist = struct.unpack_from("<Qd", payload, off)
            off += struct.calcsize("<Qd")
            conns.append((int(peer_id), float(dist)))
        connections[int(cid)] = conns

        cluster = Cluster(int(cid), feature_sum=feature_sum,
                          centroid=np.zeros(dim, dtype=np.float32),
                          member_ids=(int(m) for m in members))
        if not cluster.member_ids:
            raise CorruptSnapshot(f"cluster {cid} has no members")
        db.clusters[cluster.id] = cluster
        db.ingested_ids.update(cluster.member_ids)
    if off != len(payload):
        raise CorruptSnapshot("trailing bytes after cluster records")

    for cid, conns in connections.items():
        cluster = db.clusters[cid]
        for peer_id, dist in conns:
            if peer_id not in db.clusters:
                raise CorruptSnapshot(f"connection to unknown cluster {peer_id}")
            cluster.connections[peer_id] = dist
    for cid, cluster in db.clusters.items():
        for peer_id, dist in cluster.connections.items():
            if db.clusters[peer_id].connections.get(cid) != dist:
                raise CorruptSnapshot(f"asymmetric connection {cid}<->{peer_id}")
    for cid in sorted(db.clusters):
        cluster = db.clusters[cid]
        db._append_row(cluster)
        db._refresh_centroid(cluster)
    if db.clusters and int(next_id) <= max(db.clusters):
        raise CorruptSnapshot("next_cluster_id collides with a live cluster id")
    db.next_cluster_id = int(next_id)
    return db


def save_snapshot(path: str | Path, db: ClusterDatabase) -> None:
    Path(path).write_bytes(snapshot(db))


def load_snapshot(path: str | Path) -> ClusterDatabase:
    return restore(Path(path).read_bytes())


# -- shuffling ----------------------------------------------------------------


def shuffle_order(count: int, seed: int) -> np.ndarray:
    """Deterministic permutation of 0..count-1.

    Fisher-Yates driven by PCG64 raw 64-bit outputs with modulo rejection;
    the PCG64 bitstream is stability-guaranteed, so the same seed yields the
    same permutation everywhere.
    """
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    perm = np.arange(count, dtype=np.int64)
    if count < 2:
        return perm
    bitgen = np.random.PCG64(seed)
    buf: list[int] = []

    def draw() -> int:
        if not buf:
            buf.extend(bitgen.random_raw(1024).tolist())
        return buf.pop()

    full = 1 << 64
    for i in range(count - 1, 0, -1):
        bound = i + 1
        limit = full - (full % bound)
        r = draw()
        while r >= limit:
            r = draw()
        j = r % bound
        perm[i], perm[j] = perm[j], perm[i]
    return perm
