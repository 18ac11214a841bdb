"""Online identity clustering for streams of unit-normalized embeddings."""

from .core import (
    Cluster,
    ClusterDatabase,
    Params,
    Sample,
    euclidean_distance,
    normalize,
)
from .engine import (
    ACTION_FUSED,
    ACTION_NEW,
    ACTION_NEW_CONNECTED,
    EngineEventReport,
    check_connections,
    process_sample,
    process_sample_stage1_only,
    recluster,
)
from .kernel import NeighborHit, distances_to_all, nearest, next_nearest_iter
from .metrics import (
    IdentityPartition,
    MetricReport,
    bcubed,
    compute_metric_report,
    extract_identities,
    nmi,
)
from .tuner import TuneConfig, TuneResult, tune, tune_robustness, tune_thresholds

__version__ = "0.1.0"

__all__ = [
    "ACTION_FUSED",
    "ACTION_NEW",
    "ACTION_NEW_CONNECTED",
    "Cluster",
    "ClusterDatabase",
    "EngineEventReport",
    "IdentityPartition",
    "MetricReport",
    "NeighborHit",
    "Params",
    "Sample",
    "TuneConfig",
    "TuneResult",
    "bcubed",
    "check_connections",
    "compute_metric_report",
    "distances_to_all",
    "euclidean_distance",
    "extract_identities",
    "nearest",
    "next_nearest_iter",
    "nmi",
    "normalize",
    "process_sample",
    "process_sample_stage1_only",
    "recluster",
    "tune",
    "tune_robustness",
    "tune_thresholds",
]
