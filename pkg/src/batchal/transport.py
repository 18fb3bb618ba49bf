"""Optimal transport distances between point clouds with uniform weights.

The exact solver is the workhorse of the whole pipeline: selection rewards,
cluster matching and the reward-regression targets are all Wasserstein-1
distances between small feature clouds.  Equal-size clouds reduce to an
assignment problem; unequal sizes are solved as an integer min-cost flow on
the bipartite transport graph (supplies scaled to the smallest common
integers), which is exact and has fully deterministic tie-breaking.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist


def _as_cloud(points, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array of points")
    return arr


@njit(cache=True)
def _min_cost_transport(cost, supply, demand):  # pragma: no cover - compiled
    """Successive shortest augmenting paths with node potentials.

    Nodes: 0..n-1 sources, n..n+m-1 sinks, then super-source and super-sink.
    Supplies and demands are integers with equal totals.  Returns
    sum(flow_ij * cost_ij).  Deterministic: ties in the Dijkstra scan and in
    path selection always resolve to the lowest node index.
    """
    n, m = cost.shape
    num_nodes = n + m + 2
    src = n + m
    dst = n + m + 1
    inf = 1e30

    flow = np.zeros((n, m), dtype=np.int64)
    rem_sup = supply.copy()
    rem_dem = demand.copy()
    pot = np.zeros(num_nodes)
    need = np.int64(0)
    for i in range(n):
        need += supply[i]

    dist = np.empty(num_nodes)
    done = np.empty(num_nodes, dtype=np.bool_)
    prev = np.empty(num_nodes, dtype=np.int64)

    pushed = np.int64(0)
    augmentations = np.int64(0)
    while pushed < need:
        augmentations += 1
        if augmentations > need:
            return -2.0  # progress guard; unreachable for valid inputs
        # full Dijkstra: every reachable node is finalized, so the potential
        # update below keeps all reduced costs non-negative
        for v in range(num_nodes):
            dist[v] = inf
            done[v] = False
            prev[v] = -1
        dist[src] = 0.0
        for _ in range(num_nodes):
            u = -1
            best = inf
            for v in range(num_nodes):
                if not done[v] and dist[v] < best:
                    best = dist[v]
                    u = v
            if u == -1:
                break
            done[u] = True
            # relaxations never touch finalized nodes: accumulated float noise
            # can push a reduced cost a few ulps negative, and re-improving a
            # finalized node lets the predecessor pointers form a cycle
            if u == src:
                for i in range(n):
                    if rem_sup[i] > 0 and not done[i] and dist[src] < dist[i]:
                        dist[i] = dist[src]
                        prev[i] = src
            elif u < n:
                for j in range(m):
                    if done[n + j]:
                        continue
                    rc = cost[u, j] - pot[u] + pot[n + j]
                    nd = dist[u] + rc
                    if nd < dist[n + j]:
                        dist[n + j] = nd
                        prev[n + j] = u
            elif u < n + m:
                j = u - n
                if rem_dem[j] > 0 and not done[dst] and dist[u] < dist[dst]:
                    dist[dst] = dist[u]
                    prev[dst] = u
                for i in range(n):
                    if flow[i, j] > 0 and not done[i]:
                        rc = -cost[i, j] - pot[u] + pot[i]
                        nd = dist[u] + rc
                        if nd < dist[i]:
                            dist[i] = nd
                            prev[i] = u
        if prev[dst] == -1:
            return -1.0  # infeasible; impossible for matching totals

        bottleneck = need
        v = dst
        while v != src:
            p = prev[v]
            if p == src:
                if rem_sup[v] < bottleneck:
                    bottleneck = rem_sup[v]
            elif v == dst:
                if rem_dem[p - n] < bottleneck:
                    bottleneck = rem_dem[p - n]
            elif p >= n:
                if flow[v, p - n] < bottleneck:
                    bottleneck = flow[v, p - n]
            v = p

        v = dst
        while v != src:
            p = prev[v]
            if p == src:
                rem_sup[v] -= bottleneck
            elif v == dst:
                rem_dem[p - n] -= bottleneck
            elif p < n:
                flow[p, v - n] += bottleneck
            else:
                flow[v, p - n] -= bottleneck
            v = p
        pushed += bottleneck

        for v in range(num_nodes):
            if dist[v] < inf:
                pot[v] -= min(dist[v], dist[dst])

    total = 0.0
    for i in range(n):
        for j in range(m):
            if flow[i, j] > 0:
                total += flow[i, j] * cost[i, j]
    return total


def _transport_cost(cost: np.ndarray, n: int, m: int) -> float:
    g = math.gcd(n, m)
    supply = np.full(n, m // g, dtype=np.int64)
    demand = np.full(m, n // g, dtype=np.int64)
    total = _min_cost_transport(cost, supply, demand)
    if total < 0.0:
        raise RuntimeError("transport solver failed to make progress")
    return float(total * g / (n * m))


def wasserstein(a, b) -> float:
    """Exact Wasserstein-1 distance between uniformly weighted point clouds.

    Euclidean ground cost.  Equal sizes are solved as an assignment problem;
    unequal sizes as the transportation problem with marginals 1/n and 1/m.
    """
    a = _as_cloud(a, "a")
    b = _as_cloud(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}"
        )
    n, m = a.shape[0], b.shape[0]
    cost = cdist(a, b)
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / n)
    return _transport_cost(cost, n, m)


class SinkhornResult(NamedTuple):
    cost: float
    converged: bool


def sinkhorn(a, b, epsilon: float, max_iters: int = 5000, tol: float = 1e-6) -> SinkhornResult:
    """Entropic-regularized transport cost between uniform point clouds.

    Log-domain iterations, so small epsilon values stay stable.  The reported
    cost is the transport term <P, C> of the regularized plan.  ``converged``
    is False when the marginal error is still above ``tol`` after
    ``max_iters`` iterations.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    a = _as_cloud(a, "a")
    b = _as_cloud(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    n, m = a.shape[0], b.shape[0]
    cost = cdist(a, b)
    log_mu = -math.log(n)
    log_nu = -math.log(m)
    f = np.zeros(n)
    g = np.zeros(m)
    converged = False
    for _ in range(max_iters):
        # S_ij = (f_i + g_j - C_ij) / eps are the log plan entries up to marginals
        s = (f[:, None] + g[None, :] - cost) / epsilon
        f = f + epsilon * (log_mu - _logsumexp_rows(s))
        s = (f[:, None] + g[None, :] - cost) / epsilon
        g = g + epsilon * (log_nu - _logsumexp_rows(s.T))
        s = (f[:, None] + g[None, :] - cost) / epsilon
        row_err = np.abs(np.exp(_logsumexp_rows(s)) - 1.0 / n).max()
        if row_err < tol:
            converged = True
            break
    plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
    return SinkhornResult(float((plan * cost).sum()), converged)


def _logsumexp_rows(s: np.ndarray) -> np.ndarray:
    peak = s.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(s - peak).sum(axis=1, keepdims=True))).ravel()


def ot_distance(a, b, exact_max_points: int = 512, epsilon_scale: float = 0.01,
                max_iters: int = 5000) -> float:
    """Distance used by the pipeline: exact below a size threshold.

    Clouds larger than ``exact_max_points`` on either side fall back to the
    entropic approximation with epsilon set to ``epsilon_scale`` times the
    median ground cost.
    """
    a = _as_cloud(a, "a")
    b = _as_cloud(b, "b")
    if max(a.shape[0], b.shape[0]) <= exact_max_points:
        return wasserstein(a, b)
    med = float(np.median(cdist(a, b)))
    eps = epsilon_scale * med if med > 0 else epsilon_scale
    return sinkhorn(a, b, eps, max_iters=max_iters).cost
