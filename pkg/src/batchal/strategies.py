"""Baseline pool-selection rules sharing the loop skeleton.

All selectors receive the pool as Sample objects but, except for the
label-using oracle, only ever touch ids and features (plus model
predictions).  Score ties are broken by a seeded shuffle of the pool so that
degenerate models still select deterministically per seed.
"""

from __future__ import annotations

import numpy as np

from . import learner
from .superloss import SuperLossConfig
from .trustset import TrustSetConfig, extract_trustset


def _pool_arrays(unlabeled_samples):
    samples = sorted(unlabeled_samples, key=lambda s: s.id)
    ids = np.array([s.id for s in samples])
    x = np.stack([s.features for s in samples])
    return ids, x


def _top_by_score(ids: np.ndarray, scores: np.ndarray, b: int,
                  rng: np.random.Generator) -> list[int]:
    """Highest scores first; ties resolved by a seeded shuffle (stable sort)."""
    perm = rng.permutation(len(ids))
    order = perm[np.argsort(-scores[perm], kind="stable")]
    return [int(i) for i in ids[order[:b]]]


def select_random(unlabeled_samples, b: int, rng: np.random.Generator) -> list[int]:
    ids, _ = _pool_arrays(unlabeled_samples)
    if b > len(ids):
        raise ValueError(f"b={b} exceeds pool size {len(ids)}")
    return [int(i) for i in rng.choice(ids, size=b, replace=False)]


def select_entropy(unlabeled_samples, params, b: int,
                   rng: np.random.Generator) -> list[int]:
    """Largest predictive entropy first."""
    ids, x = _pool_arrays(unlabeled_samples)
    probs = learner.predict_proba(params, x)
    entropy = -(probs * np.log(np.maximum(probs, learner.PROB_FLOOR))).sum(axis=1)
    return _top_by_score(ids, entropy, b, rng)


def select_margin(unlabeled_samples, params, b: int,
                  rng: np.random.Generator) -> list[int]:
    """Smallest top-two probability margin first."""
    ids, x = _pool_arrays(unlabeled_samples)
    probs = learner.predict_proba(params, x)
    part = np.sort(probs, axis=1)
    margin = part[:, -1] - part[:, -2]
    return _top_by_score(ids, -margin, b, rng)


def select_pseudoscore(unlabeled_samples, params, b: int,
                       rng: np.random.Generator) -> list[int]:
    """Top prediction-error norm against the model's own argmax pseudo-label."""
    ids, x = _pool_arrays(unlabeled_samples)
    probs = learner.predict_proba(params, x)
    pseudo = probs.argmax(axis=1)
    onehot = np.eye(probs.shape[1])[pseudo]
    score = np.linalg.norm(probs - onehot, axis=1)
    return _top_by_score(ids, score, b, rng)


def select_coreset(unlabeled_samples, labeled_samples, params, b: int) -> list[int]:
    """Greedy k-center in feature space, labeled points as initial centers.

    Each pick is the pool point farthest from its nearest center (ties to the
    lowest id), which then becomes a center itself.
    """
    ids, x_pool = _pool_arrays(unlabeled_samples)
    if b > len(ids):
        raise ValueError(f"b={b} exceeds pool size {len(ids)}")
    labeled = sorted(labeled_samples, key=lambda s: s.id)
    x_lab = np.stack([s.features for s in labeled])
    f_pool = learner.features(params, x_pool)
    f_lab = learner.features(params, x_lab)

    min_dist = np.linalg.norm(
        f_pool[:, None, :] - f_lab[None, :, :], axis=2).min(axis=1)
    chosen: list[int] = []
    for _ in range(b):
        pick = int(np.argmax(min_dist))
        chosen.append(int(ids[pick]))
        dist_new = np.linalg.norm(f_pool - f_pool[pick], axis=1)
        min_dist = np.minimum(min_dist, dist_new)
        min_dist[pick] = -np.inf
    return chosen


def select_oracle(unlabeled_samples, params_ensemble, b: int,
                  ts_cfg: TrustSetConfig, sl_cfg: SuperLossConfig) -> list[int]:
    """Class-balanced top curriculum scores using the pool's true labels.

    The one strategy that is allowed to read pool labels; it upper-bounds
    what the learned policy tries to approximate.
    """
    samples = sorted(unlabeled_samples, key=lambda s: s.id)
    if b > len(samples):
        raise ValueError(f"b={b} exceeds pool size {len(samples)}")
    cfg = TrustSetConfig(size=b, use_curriculum=ts_cfg.use_curriculum,
                         ensemble_size=ts_cfg.ensemble_size)
    return list(extract_trustset(samples, params_ensemble, cfg, sl_cfg).ids)
