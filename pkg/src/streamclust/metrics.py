"""Identity extraction and clustering quality metrics (BCubed, NMI)."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import AbstractSet, Mapping

from .core import ClusterDatabase
from .errors import MissingTruthLabel


@dataclass(frozen=True)
class IdentityPartition:
    """Map from sample id to a dense identity id in 0..n_identities-1."""

    assignment: dict[int, int]
    n_identities: int

    @classmethod
    def from_labels(cls, labels: Mapping[int, int]) -> "IdentityPartition":
        """Densify arbitrary labels into identity ids by ascending label."""
        order = {lab: i for i, lab in enumerate(sorted(set(labels.values())))}
        return cls({sid: order[lab] for sid, lab in labels.items()}, len(order))

    def restrict(self, keep: AbstractSet[int]) -> "IdentityPartition":
        return IdentityPartition.from_labels(
            {sid: ident for sid, ident in self.assignment.items() if sid in keep}
        )


@dataclass(frozen=True)
class MetricReport:
    bcubed_precision: float
    bcubed_recall: float
    bcubed_f: float
    nmi: float
    n_samples: int
    n_pred_identities: int
    n_true_identities: int

    def as_dict(self) -> dict:
        return {
            "bcubed_precision": self.bcubed_precision,
            "bcubed_recall": self.bcubed_recall,
            "bcubed_f": self.bcubed_f,
            "nmi": self.nmi,
            "n_samples": self.n_samples,
            "n_pred_identities": self.n_pred_identities,
            "n_true_identities": self.n_true_identities,
        }

    def flat_lines(self) -> list[str]:
        """Flat key=value text record, one metric per line."""
        return [f"{k}={v}" for k, v in self.as_dict().items()]


class _UnionFind:
    """Union-find with path compression and union by rank."""

    def __init__(self, items):
        self._parent = {x: x for x in items}
        self._rank = {x: 0 for x in items}

    def find(self, x):
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self._rank[ra] < self._rank[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        if self._rank[ra] == self._rank[rb]:
            self._rank[ra] += 1


def extract_identities(db: ClusterDatabase) -> IdentityPartition:
    """Identities are connected components of the cluster-connection graph.

    Every sample inherits the component of its cluster; component ids are
    assigned 0..n-1 by ascending smallest cluster id within the component.
    """
    uf = _UnionFind(db.clusters.keys())
    for cluster in db.iter_clusters():
        for peer_id in cluster.connections:
            if peer_id > cluster.id:
                uf.union(cluster.id, peer_id)

    root_min: dict[int, int] = {}
    for cid in db.clusters:
        root = uf.find(cid)
        cur = root_min.get(root)
        if cur is None or cid < cur:
            root_min[root] = cid
    ident_of_root = {
        root: i for i, (root, _) in
        enumerate(sorted(root_min.items(), key=lambda kv: kv[1]))
    }

    assignment: dict[int, int] = {}
    for cid, cluster in db.clusters.items():
        ident = ident_of_root[uf.find(cid)]
        for sid in cluster.member_ids:
            assignment[sid] = ident
    return IdentityPartition(assignment, len(ident_of_root))


def bcubed(pred: IdentityPartition, truth: IdentityPartition,
           ignore: AbstractSet[int] = frozenset()) -> tuple[float, float, float]:
    """BCubed precision, recall and F over the prediction's sample ids.

    Per item: precision is the fraction of its predicted-cluster peers that
    share its true label; recall is the fraction of its true-label peers
    that share its predicted cluster. An item counts as its own peer. Ids in
    `ignore` (distractors) are excluded both as anchors and as peers.
    Requires a truth label for every non-ignored id.
    """
    anchors = [sid for sid in pred.assignment if sid not in ignore]
    if not anchors:
        return 0.0, 0.0, 0.0

    pred_size: Counter = Counter()
    true_size: Counter = Counter()
    joint: Counter = Counter()
    pairs = {}
    for sid in anchors:
        t = truth.assignment.get(sid)
        if t is None:
            raise MissingTruthLabel(f"sample id {sid} has no ground-truth label")
        c = pred.assignment[sid]
        pred_size[c] += 1
        true_size[t] += 1
        joint[(c, t)] += 1
        pairs[sid] = (c, t)

    p_sum = 0.0
    r_sum = 0.0
    for sid in anchors:
        c, t = pairs[sid]
        overlap = joint[(c, t)]
        p_sum += overlap / pred_size[c]
        r_sum += overlap / true_size[t]
    precision = p_sum / len(anchors)
    recall = r_sum / len(anchors)
    f = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f


def _grouping(part: IdentityPartition) -> set[frozenset[int]]:
    groups: dict[int, set[int]] = {}
    for sid, ident in part.assignment.items():
        groups.setdefault(ident, set()).add(sid)
    return {frozenset(g) for g in groups.values()}


def nmi(pred: IdentityPartition, truth: IdentityPartition) -> float:
    """Normalized mutual information, I(G,C) / sqrt(H(G) * H(C)).

    Entropies use natural logs (the normalization cancels the base).
    Identical partitions score exactly 1; when either partition has zero
    entropy and the partitions differ, the score is 0 by convention.
    """
    if set(pred.assignment) != set(truth.assignment):
        raise MissingTruthLabel("prediction and truth cover different sample ids")
    n = len(pred.assignment)
    if n == 0:
        return 0.0
    if _grouping(pred) == _grouping(truth):
        return 1.0

    joint: Counter = Counter()
    pc: Counter = Counter()
    tc: Counter = Counter()
    for sid, c in pred.assignment.items():
        t = truth.assignment[sid]
        joint[(c, t)] += 1
        pc[c] += 1
        tc[t] += 1

    h_pred = -sum((k / n) * math.log(k / n) for k in pc.values())
    h_true = -sum((k / n) * math.log(k / n) for k in tc.values())
    if h_pred <= 0.0 or h_true <= 0.0:
        return 0.0
    info = 0.0
    for (c, t), k in joint.items():
        p_ct = k / n
        info += p_ct * math.log(p_ct * n * n / (pc[c] * tc[t]))
    return info / math.sqrt(h_pred * h_true)


def compute_metric_report(pred: IdentityPartition, truth_labels: Mapping[int, int],
                          distractors: AbstractSet[int] = frozenset()) -> MetricReport:
    """Full metric report for a prediction against truth labels.

    Distractor ids are clustered normally but excluded from every metric.
    Counts are over the evaluated (non-distractor) samples.
    """
    anchors = {sid for sid in pred.assignment if sid not in distractors}
    missing = [sid for sid in anchors if sid not in truth_labels]
    if missing:
        raise MissingTruthLabel(
            f"{len(missing)} evaluated sample ids lack truth labels "
            f"(first: {sorted(missing)[:3]})"
        )
    truth = IdentityPartition.from_labels({sid: truth_labels[sid] for sid in anchors})
    p, r, f = bcubed(pred, truth, ignore=distractors)
    pred_eval = pred.restrict(anchors)
    score = nmi(pred_eval, truth)
    return MetricReport(
        bcubed_precision=p,
        bcubed_recall=r,
        bcubed_f=f,
        nmi=score,
        n_samples=len(anchors),
        n_pred_identities=pred_eval.n_identities,
        n_true_identities=truth.n_identities,
    )
