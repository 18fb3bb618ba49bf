"""K-means over learner features: states, action groups and cluster matching.

All clustering is k-means++ seeded from an explicit integer seed, with Lloyd
iterations until the centroid shift falls below tol.  Empty clusters are
repaired by stealing the point currently farthest from its own centroid, so
every returned cluster is non-empty and results are fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transport import wasserstein
from .util import rng_from


@dataclass(frozen=True)
class Cluster:
    member_ids: tuple[int, ...]
    centroid: np.ndarray
    mean: np.ndarray
    var: np.ndarray


@dataclass(frozen=True)
class ClusterConfig:
    """labeled_k / unlabeled_k of None mean "number of classes" downstream."""

    labeled_k: int | None = None
    unlabeled_k: int | None = None
    actions_per_cluster: int = 5
    max_iter: int = 100
    tol: float = 1e-6
    normalize_features: bool = False
    distance_max_points: int = 256

    def __post_init__(self) -> None:
        if self.labeled_k is not None and self.labeled_k < 1:
            raise ValueError("labeled_k must be >= 1")
        if self.unlabeled_k is not None and self.unlabeled_k < 1:
            raise ValueError("unlabeled_k must be >= 1")
        if self.actions_per_cluster < 1:
            raise ValueError("actions_per_cluster must be >= 1")
        if self.max_iter < 1 or self.tol < 0:
            raise ValueError("max_iter must be >= 1 and tol >= 0")


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _plusplus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(points, k: int, seed: int, max_iter: int = 100,
           tol: float = 1e-6) -> list[Cluster]:
    """Cluster an id -> vector mapping into k non-empty clusters."""
    ids = np.array(sorted(points))
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(ids):
        raise ValueError(f"k={k} exceeds number of points {len(ids)}")
    x = np.stack([np.asarray(points[i], dtype=np.float64) for i in ids])
    rng = rng_from(seed)
    centers = _plusplus_init(x, k, rng)

    assign = np.zeros(len(ids), dtype=np.int64)
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        assign = d2.argmin(axis=1)
        # repair empties: steal the globally farthest point from a donor
        # cluster that can spare one
        for c in range(k):
            if not np.any(assign == c):
                cur = d2[np.arange(len(ids)), assign]
                sizes = np.bincount(assign, minlength=k)
                movable = sizes[assign] > 1
                if not movable.any():
                    raise RuntimeError("cannot repair empty cluster")
                far = np.where(movable, cur, -np.inf).argmax()
                assign[far] = c
                centers[c] = x[far]
                d2 = _sq_dists(x, centers)
        new_centers = np.stack([x[assign == c].mean(axis=0) for c in range(k)])
        shift = np.linalg.norm(new_centers - centers, axis=1).max()
        centers = new_centers
        if shift < tol:
            break
    assign = _sq_dists(x, centers).argmin(axis=1)
    # a final repair pass keeps the invariant even if the last assignment
    # emptied a cluster
    for c in range(k):
        if not np.any(assign == c):
            cur = _sq_dists(x, centers)[np.arange(len(ids)), assign]
            sizes = np.bincount(assign, minlength=k)
            movable = sizes[assign] > 1
            far = np.where(movable, cur, -np.inf).argmax()
            assign[far] = c
            centers[c] = x[far]

    clusters = []
    for c in range(k):
        members = ids[assign == c]
        feats = x[assign == c]
        clusters.append(Cluster(
            member_ids=tuple(int(i) for i in members),
            centroid=centers[c].copy(),
            mean=feats.mean(axis=0),
            var=feats.var(axis=0),
        ))
    return clusters


def cluster_stats(cluster: Cluster, points) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and population variance of the member features."""
    feats = np.stack([np.asarray(points[i], dtype=np.float64)
                      for i in cluster.member_ids])
    return feats.mean(axis=0), feats.var(axis=0)


def _cloud(cluster: Cluster, points, max_points: int, seed: int) -> np.ndarray:
    member_ids = cluster.member_ids
    if len(member_ids) > max_points:
        rng = rng_from(seed, len(member_ids))
        member_ids = tuple(sorted(
            rng.choice(np.array(member_ids), size=max_points, replace=False).tolist()
        ))
    return np.stack([np.asarray(points[i], dtype=np.float64) for i in member_ids])


def nearest_labeled_cluster(u_cluster: Cluster, labeled_clusters, points,
                            max_points: int = 256, seed: int = 0) -> Cluster:
    """The labeled cluster with minimal Wasserstein distance to u_cluster.

    Clouds above max_points per side are subsampled (seeded) to bound the
    transport problem.  Ties resolve to the lowest cluster index.
    """
    labeled_clusters = list(labeled_clusters)
    if not labeled_clusters:
        raise ValueError("need at least one labeled cluster")
    u_cloud = _cloud(u_cluster, points, max_points, seed)
    best_idx = 0
    best = np.inf
    for idx, lab in enumerate(labeled_clusters):
        d = wasserstein(_cloud(lab, points, max_points, seed), u_cloud)
        if d < best:
            best = d
            best_idx = idx
    return labeled_clusters[best_idx]


def action_groups(u_cluster: Cluster, actions_per_cluster: int, seed: int,
                  points, max_iter: int = 100, tol: float = 1e-6) -> list[Cluster]:
    """Sub-cluster a pool cluster into candidate action groups."""
    member_points = {i: points[i] for i in u_cluster.member_ids}
    k = min(actions_per_cluster, len(member_points))
    return kmeans(member_points, k, seed, max_iter=max_iter, tol=tol)
