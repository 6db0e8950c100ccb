"""Exact leave-one-out 1-nearest-neighbor error, the complexity measure.

The decision rule is defined on reference distances: squared Euclidean
distance accumulated left-to-right in float64, ties broken by the lowest
point index.  The fast path prunes with a BLAS Gram expansion
(|a|^2 + |b|^2 - 2 a.b) but re-evaluates every candidate within a safety
margin of the provisional best using the reference accumulation, so its
decisions are identical to a direct scan regardless of backend, blocking,
or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DimensionError, InsufficientDataError, ParameterError
from .pointset import LabeledPointSet

# Candidates within this relative margin of the provisional nearest distance
# are re-evaluated with the reference accumulation before tie-breaking.
REFINE_REL_MARGIN = 1e-6
# Absolute guard against Gram-expansion cancellation, scaled by squared norms;
# ~4000x the worst-case f64 dot error at d = 1024.
REFINE_ABS_GUARD = 1e-9


@dataclass(frozen=True)
class ComplexityEstimate:
    """A LOO-1NN error value plus the subset scheme that produced it."""

    value: float
    n_points: int
    subset_count: int
    subset_size: int
    per_subset: tuple[float, ...]
    dropped_tail: int

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "n_points": self.n_points,
            "subset_count": self.subset_count,
            "subset_size": self.subset_size,
            "per_subset": list(self.per_subset),
            "dropped_tail": self.dropped_tail,
        }

    @staticmethod
    def from_dict(d: dict) -> "ComplexityEstimate":
        return ComplexityEstimate(
            value=float(d["value"]),
            n_points=int(d["n_points"]),
            subset_count=int(d["subset_count"]),
            subset_size=int(d["subset_size"]),
            per_subset=tuple(float(v) for v in d["per_subset"]),
            dropped_tail=int(d["dropped_tail"]),
        )


# ---------------------------------------------------------------------------
# Reference distance
# ---------------------------------------------------------------------------

def _seq_sqdist_rows(diffs: np.ndarray) -> np.ndarray:
    """Left-to-right f64 sum of squares per row; the reference accumulation."""
    sq = diffs * diffs
    if sq.shape[1] == 0:
        return np.zeros(sq.shape[0], dtype=np.float64)
    return np.cumsum(sq, axis=1)[:, -1]


def squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Squared Euclidean distance, accumulated in float64."""
    av = np.asarray(a, dtype=np.float64).reshape(-1)
    bv = np.asarray(b, dtype=np.float64).reshape(-1)
    if av.shape != bv.shape:
        raise DimensionError(f"length mismatch: {av.shape[0]} vs {bv.shape[0]}")
    return float(_seq_sqdist_rows((av - bv)[None, :])[0])


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

if backend.NUMBA_AVAILABLE:
    from numba import njit, prange

    @njit(parallel=True, cache=True)
    def _scan_refine_numba(G, norms, X, i0, maxnorm, labels, preds):  # pragma: no cover
        nb, n = G.shape
        d = X.shape[1]
        for r in prange(nb):
            i = i0 + r
            # pass 1: provisional nearest by the Gram expansion
            mt = np.inf
            for j in range(n):
                if j == i:
                    continue
                dj = norms[i] + norms[j] - 2.0 * G[r, j]
                if dj < mt:
                    mt = dj
            thresh = mt + mt * REFINE_REL_MARGIN + REFINE_ABS_GUARD * (norms[i] + maxnorm)
            # pass 2: reference re-evaluation of candidates; lowest index wins ties
            best = np.inf
            bj = -1
            for j in range(n):
                if j == i:
                    continue
                dj = norms[i] + norms[j] - 2.0 * G[r, j]
                if dj <= thresh:
                    s = 0.0
                    for k in range(d):
                        diff = X[i, k] - X[j, k]
                        s += diff * diff
                    if s < best:
                        best = s
                        bj = j
            preds[i] = labels[bj]


def _scan_refine_numpy(G, norms, X, i0, maxnorm, labels, preds):
    nb, n = G.shape
    approx = norms[i0 : i0 + nb, None] + norms[None, :] - 2.0 * G
    approx[np.arange(nb), np.arange(i0, i0 + nb)] = np.inf
    mt = approx.min(axis=1)
    thresh = mt + mt * REFINE_REL_MARGIN + REFINE_ABS_GUARD * (norms[i0 : i0 + nb] + maxnorm)
    for r in range(nb):
        cand = np.flatnonzero(approx[r] <= thresh[r])
        exact = _seq_sqdist_rows(X[cand] - X[i0 + r])
        preds[i0 + r] = labels[cand[int(np.argmin(exact))]]


def _block_rows(n: int) -> int:
    # keep the per-block distance matrix around 256 MB
    return int(min(2048, max(16, (32 << 20) // max(n, 1))))


def loo_predictions(points: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-point LOO-1NN predicted labels for an (n, d) point matrix."""
    X = np.ascontiguousarray(points, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points, got {n}")
    norms = np.einsum("ij,ij->i", X, X)
    maxnorm = float(norms.max())
    preds = np.empty(n, dtype=np.int64)
    scan = _scan_refine_numba if backend.use_numba() else _scan_refine_numpy
    block = _block_rows(n)
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        G = X[i0:i1] @ X.T
        scan(G, norms, X, i0, maxnorm, labels, preds)
    return preds


# ---------------------------------------------------------------------------
# Estimator operations
# ---------------------------------------------------------------------------

def loo_nn_predict(set_: LabeledPointSet, i: int) -> int:
    """Label of the nearest other point (reference path, lowest-index ties)."""
    n = set_.n
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points, got {n}")
    if not 0 <= i < n:
        raise ParameterError(f"index {i} out of range for {n} points")
    X = set_.points.astype(np.float64)
    best = np.inf
    best_j = -1
    chunk = 8192
    for j0 in range(0, n, chunk):
        j1 = min(j0 + chunk, n)
        d2 = _seq_sqdist_rows(X[j0:j1] - X[i])
        if j0 <= i < j1:
            d2[i - j0] = np.inf
        k = int(np.argmin(d2))
        if d2[k] < best:
            best = float(d2[k])
            best_j = j0 + k
    return int(set_.labels[best_j])


def loo_nn_error(set_: LabeledPointSet) -> ComplexityEstimate:
    """Fraction of points whose nearest other point carries a different label."""
    n = set_.n
    if n < 2:
        raise InsufficientDataError(f"need at least 2 points, got {n}")
    preds = loo_predictions(set_.points, set_.labels)
    value = int((preds != set_.labels).sum()) / n
    return ComplexityEstimate(
        value=value,
        n_points=n,
        subset_count=1,
        subset_size=n,
        per_subset=(value,),
        dropped_tail=0,
    )


def subset_mean_complexity(set_: LabeledPointSet, subset_size: int) -> ComplexityEstimate:
    """Mean LOO error over contiguous subsets of the given size.

    The set is partitioned in stored order into floor(n/m) subsets; the
    remainder is dropped and reported.  With n <= m this collapses to the
    plain single-set estimate.
    """
    m = int(subset_size)
    if m < 2:
        raise ParameterError(f"subset size must be >= 2, got {m}")
    n = set_.n
    if n <= m:
        return loo_nn_error(set_)
    count = n // m
    per_subset = []
    for s in range(count):
        block = set_.take(np.arange(s * m, (s + 1) * m))
        preds = loo_predictions(block.points, block.labels)
        per_subset.append(int((preds != block.labels).sum()) / m)
    return ComplexityEstimate(
        value=sum(per_subset) / count,
        n_points=n,
        subset_count=count,
        subset_size=m,
        per_subset=tuple(per_subset),
        dropped_tail=n - count * m,
    )


def subsample(set_: LabeledPointSet, n: int, seed: int) -> LabeledPointSet:
    """Uniform sample without replacement, stored order preserved.

    Indices come from a PCG64 generator seeded with `seed` (first n entries
    of a full permutation, then sorted ascending), so the same (set, n, seed)
    selects the same rows on every platform and thread count.
    """
    if n < 0 or n > set_.n:
        raise ParameterError(f"subsample size {n} out of range for {set_.n} points")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.permutation(set_.n)[:n])
    return set_.take(idx)


__all__ = [
    "ComplexityEstimate",
    "squared_distance",
    "loo_predictions",
    "loo_nn_predict",
    "loo_nn_error",
    "subset_mean_complexity",
    "subsample",
]
