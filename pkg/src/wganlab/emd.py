"""Exact minibatch earth mover's distance via Hungarian assignment."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

BRUTE_FORCE_MAX_N = 9


@dataclass(frozen=True)
class Assignment:
    perm: np.ndarray  # perm[i] = column matched to row i
    total_cost: float


def cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances, ``costs[i, j] = ||a_i - b_j||``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError(f"point batches have incompatible shapes {a.shape} and {b.shape}")
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def hungarian(costs) -> Assignment:
    """Minimum-cost perfect matching of a square matrix in O(n^3).

    Shortest augmenting paths with row/column potentials; the inner scan over
    columns is vectorized.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)

    # index 0 is a virtual column; rows and columns are 1-based below
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j] = row owning column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used
            free[0] = False
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1

    perm = np.empty(n, dtype=np.int64)
    perm[match[1:] - 1] = np.arange(n)
    return Assignment(perm, float(np.sum(c[np.arange(n), perm])))


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] < 1:
        raise ValueError(f"EMD needs two non-empty batches of equal size, got {a.shape} and {b.shape}")
    return a, b


def emd(a, b) -> float:
    """Mean per-point transport cost of the optimal matching (W1 between equal-size point sets)."""
    a, b = _check_pair(a, b)
    return hungarian(cost_matrix(a, b)).total_cost / a.shape[0]


def brute_force_emd(a, b) -> float:
    """Minimum over all n! matchings; test oracle for n <= 9."""
    a, b = _check_pair(a, b)
    n = a.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    costs = cost_matrix(a, b)
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    totals = costs[np.arange(n), perms].sum(axis=1)
    return float(totals.min()) / n
