"""Compiled numeric primitives shared by the kernel and the core model.

Every distance in the package comes from one arithmetic recipe: widen the
float32 operands to float64, accumulate the squared differences left to
right, take the square root, clamp at 2. The parallel kernel applies the
recipe per row, so its output is bit-identical to the serial kernel and to
a plain Python loop for any thread count. The explicit-subtraction form is
exact at zero distance, which the fused 2-2*dot identity is not once the
operands carry float32 rounding.
"""

import numpy as np
from numba import config as _numba_config
from numba import njit, prange

# The tuner forks worker pools; OpenMP/TBB threading is not fork safe, the
# workqueue layer is.
_numba_config.THREADING_LAYER = "workqueue"

# Below this row count the prange dispatch overhead dominates; the serial
# twin computes the exact same bits.
PARALLEL_MIN_ROWS = 4096


@njit(cache=True)
def _pair_distance(u, v):
    acc = 0.0
    for i in range(u.shape[0]):
        diff = np.float64(u[i]) - np.float64(v[i])
        acc += diff * diff
    d = np.sqrt(acc)
    return d if d < 2.0 else 2.0


@njit(cache=True)
def _distances_serial(mat, q, out):
    for k in range(mat.shape[0]):
        acc = 0.0
        for d in range(mat.shape[1]):
            diff = np.float64(mat[k, d]) - np.float64(q[d])
            acc += diff * diff
        r = np.sqrt(acc)
        out[k] = r if r < 2.0 else 2.0


@njit(parallel=True, cache=True)
def _distances_parallel(mat, q, out):
    for k in prange(mat.shape[0]):
        acc = 0.0
        for d in range(mat.shape[1]):
            diff = np.float64(mat[k, d]) - np.float64(q[d])
            acc += diff * diff
        r = np.sqrt(acc)
        out[k] = r if r < 2.0 else 2.0


def unit_distances(mat: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Distances from unit query q to every row of the unit-row matrix."""
    out = np.empty(mat.shape[0], dtype=np.float64)
    if mat.shape[0] >= PARALLEL_MIN_ROWS:
        _distances_parallel(mat, q, out)
    else:
        _distances_serial(mat, q, out)
    return out


def unit_pair_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Distance between two unit float32 vectors, same bits as unit_distances."""
    return float(_pair_distance(u, v))


def warmup(dim: int = 8) -> None:
    """Force JIT compilation ahead of latency-sensitive loops."""
    m = np.zeros((2, dim), dtype=np.float32)
    m[:, 0] = 1.0
    q = m[0].copy()
    unit_distances(m, q)
    _distances_parallel(m, q, np.empty(2))
    unit_pair_distance(q, q)
