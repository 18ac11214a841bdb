"""Synthetic identity streams on the unit sphere.

Each identity is a small set of von-Mises-Fisher-like modes: a base
direction plus 0-2 sibling mode centers displaced by a fixed chordal
distance, with samples drawn as normalize(center + sigma * gauss). Base
directions are rejection-sampled to keep identities apart; in the high
dimensions used here sibling-mode wander barely perturbs inter-identity
distances, so intra-mode spread stays well below identity separation.

Labels are the identity indexes; distractors (one-off random directions)
get label -1.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from . import fileio


@dataclass(frozen=True)
class SynthConfig:
    n_identities: int
    n_samples: int
    dim: int = 64
    modes_min: int = 1
    modes_max: int = 3
    mode_spread: float = 0.32
    mode_separation: float = 0.62
    max_identity_dot: float = 0.30
    distractor_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 1 or self.n_samples < 1 or self.dim < 2:
            raise ValueError("n_identities, n_samples and dim must be positive")
        if not 1 <= self.modes_min <= self.modes_max:
            raise ValueError(f"bad mode range [{self.modes_min}, {self.modes_max}]")
        if not 0.0 <= self.distractor_fraction < 1.0:
            raise ValueError(f"bad distractor_fraction {self.distractor_fraction}")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)


def _separated_directions(rng: np.random.Generator, n: int, dim: int,
                          max_dot: float) -> np.ndarray:
    """Unit directions with pairwise |dot| <= max_dot, by rejection."""
    out = np.empty((n, dim))
    accepted = 0
    attempts = 0
    while accepted < n:
        attempts += 1
        if attempts > 400 * n:
            raise RuntimeError(
                f"cannot place {n} directions with max_dot={max_dot} in dim={dim}"
            )
        cand = rng.normal(size=dim)
        cand /= np.linalg.norm(cand)
        if accepted and np.abs(out[:accepted] @ cand).max() > max_dot:
            continue
        out[accepted] = cand
        accepted += 1
    return out


def _displace(rng: np.random.Generator, base: np.ndarray, chord: float) -> np.ndarray:
    """A unit vector at the given chordal distance from base."""
    t = rng.normal(size=base.shape[0])
    t -= (t @ base) * base
    t /= np.linalg.norm(t)
    theta = 2.0 * np.arcsin(min(chord, 2.0) / 2.0)
    return np.cos(theta) * base + np.sin(theta) * t


def generate(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Return (vectors, labels): unit float64 rows, int64 labels, grouped by
    identity. Apply a shuffle (fileio.shuffle_order) to get a stream."""
    rng = np.random.default_rng(cfg.seed)
    n_distract = int(round(cfg.n_samples * cfg.distractor_fraction))
    n_real = cfg.n_samples - n_distract

    bases = _separated_directions(rng, cfg.n_identities, cfg.dim, cfg.max_identity_dot)
    mode_centers: list[np.ndarray] = []
    mode_identity: list[int] = []
    for ident in range(cfg.n_identities):
        n_modes = int(rng.integers(cfg.modes_min, cfg.modes_max + 1))
        mode_centers.append(bases[ident])
        mode_identity.append(ident)
        for _ in range(n_modes - 1):
            mode_centers.append(_displace(rng, bases[ident], cfg.mode_separation))
            mode_identity.append(ident)
    centers = np.asarray(mode_centers)

    owner = rng.integers(0, cfg.n_identities, size=n_real)
    sigma = cfg.mode_spread / np.sqrt(cfg.dim)
    vectors = np.empty((cfg.n_samples, cfg.dim))
    labels = np.empty(cfg.n_samples, dtype=np.int64)
    modes_of = [np.flatnonzero(np.asarray(mode_identity) == i)
                for i in range(cfg.n_identities)]
    for row, ident in enumerate(owner):
        mode = int(rng.choice(modes_of[ident]))
        vectors[row] = centers[mode] + sigma * rng.normal(size=cfg.dim)
        labels[row] = ident
    for row in range(n_real, cfg.n_samples):
        vectors[row] = rng.normal(size=cfg.dim)
        labels[row] = -1
    return _unit_rows(vectors), labels


def mode_geometry(cfg: SynthConfig) -> dict:
    """Measured separation statistics of the mode layout (for sanity checks)."""
    rng = np.random.default_rng(cfg.seed)
    bases = _separated_directions(rng, cfg.n_identities, cfg.dim, cfg.max_identity_dot)
    centers = []
    idents = []
    for ident in range(cfg.n_identities):
        n_modes = int(rng.integers(cfg.modes_min, cfg.modes_max + 1))
        centers.append(bases[ident])
        idents.append(ident)
        for _ in range(n_modes - 1):
            centers.append(_displace(rng, bases[ident], cfg.mode_separation))
            idents.append(ident)
    mat = np.asarray(centers)
    idents_arr = np.asarray(idents)
    dots = np.clip(mat @ mat.T, -1.0, 1.0)
    dist = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * dots))
    same = idents_arr[:, None] == idents_arr[None, :]
    off_diag = ~np.eye(len(mat), dtype=bool)
    inter = dist[off_diag & ~same]
    intra = dist[off_diag & same]
    return {
        "n_modes": len(mat),
        "min_inter_identity_mode_distance": float(inter.min()) if inter.size else float("inf"),
        "max_intra_identity_mode_distance": float(intra.max()) if intra.size else 0.0,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m streamclust.synth",
        description="Generate a synthetic identity stream as .vec/.labels files",
    )
    parser.add_argument("--out_vectors", required=True)
    parser.add_argument("--out_labels", required=True)
    parser.add_argument("--n_identities", type=int, required=True)
    parser.add_argument("--n_samples", type=int, required=True)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--modes_min", type=int, default=1)
    parser.add_argument("--modes_max", type=int, default=3)
    parser.add_argument("--mode_spread", type=float, default=0.32)
    parser.add_argument("--mode_separation", type=float, default=0.62)
    parser.add_argument("--distractor_fraction", type=float, default=0.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    cfg = SynthConfig(
        n_identities=args.n_identities,
        n_samples=args.n_samples,
        dim=args.dim,
        modes_min=args.modes_min,
        modes_max=args.modes_max,
        mode_spread=args.mode_spread,
        mode_separation=args.mode_separation,
        distractor_fraction=args.distractor_fraction,
        seed=args.seed,
    )
    vectors, labels = generate(cfg)
    fileio.write_vectors(args.out_vectors, vectors.astype(np.float32))
    all_labels = {i: int(labels[i]) for i in range(len(labels))}
    fileio.write_labels(args.out_labels, all_labels)
    print(f"wrote {len(labels)} samples, dim {cfg.dim}, "
          f"{cfg.n_identities} identities to {args.out_vectors}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
