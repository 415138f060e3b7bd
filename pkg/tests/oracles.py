"""Brute-force reference implementations used only by tests.

Everything here re-derives its answer from first principles with plain
numpy/stdlib code and imports nothing from the package under test, so a bug
in the library cannot hide inside its own oracle.
"""

from __future__ import annotations

import math
import statistics
from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass
class OracleResult:
    value: object
    tolerance: float
    ok: bool


def fd_gradient(loss_fn, params: dict[str, np.ndarray], h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central finite differences of loss_fn at params, coordinate by coordinate.

    loss_fn must be a pure function of the dict's float64 arrays.
    """
    grads = {}
    for name, value in params.items():
        value = np.asarray(value, dtype=np.float64)
        grad = np.zeros_like(value)
        it = np.nditer(value, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            bumped = {k: v.copy() for k, v in params.items()}
            bumped[name][idx] = value[idx] + h
            up = loss_fn(bumped)
            bumped[name][idx] = value[idx] - h
            down = loss_fn(bumped)
            if not (math.isfinite(up) and math.isfinite(down)):
                raise ValueError(f"non-finite loss while probing {name}{idx}")
            grad[idx] = (up - down) / (2.0 * h)
            it.iternext()
        grads[name] = grad
    return grads


def max_relative_error(approx: np.ndarray, exact: np.ndarray, floor: float = 1e-10) -> float:
    """inf-norm relative disagreement between two arrays, floored to dodge 0/0."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    num = np.max(np.abs(approx - exact)) if approx.size else 0.0
    den = max(np.max(np.abs(approx), initial=0.0), np.max(np.abs(exact), initial=0.0), floor)
    return float(num / den)


def exact_linear_cca(x1: np.ndarray, x2: np.ndarray, k: int, reg: float = 0.0) -> np.ndarray:
    """Top-k canonical correlations of two views, solved in closed form.

    Columns are centered; covariances use the 1/(n-1) convention with reg
    added to the diagonal of each view's own covariance. The correlations are
    the singular values of S11^{-1/2} S12 S22^{-1/2}.
    """
    x1 = x1 - x1.mean(axis=0)
    x2 = x2 - x2.mean(axis=0)
    n = x1.shape[0]
    s11 = x1.T @ x1 / (n - 1) + reg * np.eye(x1.shape[1])
    s22 = x2.T @ x2 / (n - 1) + reg * np.eye(x2.shape[1])
    s12 = x1.T @ x2 / (n - 1)

    def inv_sqrt(s: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh(s)
        if vals.min() <= 0.0:
            raise ValueError("singular covariance; increase reg")
        return vecs @ np.diag(vals ** -0.5) @ vecs.T

    t = inv_sqrt(s11) @ s12 @ inv_sqrt(s22)
    singular = np.linalg.svd(t, compute_uv=False)
    return singular[:k]


def receptive_field(adjacency: np.ndarray, hops: int) -> list[frozenset]:
    """BFS ball of radius `hops` around every node of an undirected graph."""
    a = np.asarray(adjacency)
    n = a.shape[0]
    neighbors = [set(np.nonzero(a[i])[0].tolist()) for i in range(n)]
    balls = []
    for start in range(n):
        dist = {start: 0}
        queue = deque([start])
        while queue:
            u = queue.popleft()
            if dist[u] == hops:
                continue
            for v in neighbors[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        balls.append(frozenset(dist))
    return balls


def dense_normalized_adjacency(a: np.ndarray, lam: float) -> np.ndarray:
    """Self-loop-smoothed symmetric normalization written as explicit loops."""
    n = a.shape[0]
    m = [[float(a[i][j]) + (lam if i == j else 0.0) for j in range(n)] for i in range(n)]
    degree = [sum(row) for row in m]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = m[i][j] / math.sqrt(degree[i] * degree[j])
    return out


def newman_modularity(a: np.ndarray, communities: np.ndarray) -> float:
    """Q = (1/2m) sum_ij (A_ij - k_i k_j / 2m) [c_i == c_j]."""
    a = np.asarray(a, dtype=np.float64)
    communities = np.asarray(communities)
    two_m = a.sum()
    if two_m == 0:
        raise ValueError("empty graph has no modularity")
    k = a.sum(axis=1)
    same = communities[:, None] == communities[None, :]
    return float(((a - np.outer(k, k) / two_m) * same).sum() / two_m)


def kd_partition(points: list[tuple[float, float]], bucket: int) -> list[list[int]]:
    """Median-split partition of 2-d points, as plain recursive Python.

    Mirrors the documented splitting contract: widest-spread axis, lower
    median as the cut (ties left), recursion stops at `bucket` points or when
    all points coincide, and a cut equal to the axis maximum is lowered to
    the largest strictly smaller value. Returns leaves in left-first order.
    """
    leaves: list[list[int]] = []

    def recurse(indices: list[int]) -> None:
        lats = [points[i][0] for i in indices]
        lons = [points[i][1] for i in indices]
        spread_lat = max(lats) - min(lats)
        spread_lon = max(lons) - min(lons)
        if len(indices) <= bucket or max(spread_lat, spread_lon) == 0.0:
            leaves.append(list(indices))
            return
        axis = 0 if spread_lat >= spread_lon else 1
        values = sorted(p[axis] for p in (points[i] for i in indices))
        cut = statistics.median_low(values)
        if cut == values[-1]:
            cut = max(v for v in values if v < values[-1])
        left = [i for i in indices if points[i][axis] <= cut]
        right = [i for i in indices if points[i][axis] > cut]
        recurse(left)
        recurse(right)

    recurse(list(range(len(points))))
    return leaves
