"""Scoring of labeled samples and class-balanced extraction of the trust set.

The score is the prediction-error norm (softmax minus one-hot, averaged over
an ensemble of models), optionally scaled by the curriculum weight sigma of
the sample's cross-entropy loss so that easy samples rank higher early on.
Extraction takes the top scorers per class under near-equal quotas; classes
without enough labeled samples contribute everything they have and the
leftover slots go to the best remaining samples regardless of class.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import learner
from .superloss import SuperLossConfig, sigma_weights


@dataclass(frozen=True)
class TrustSetConfig:
    """size None means "half the labeled set, rounded up" at extraction time."""

    size: int | None = None
    use_curriculum: bool = True
    ensemble_size: int = 1

    def __post_init__(self) -> None:
        if self.size is not None and self.size < 1:
            raise ValueError("size must be >= 1")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")


@dataclass(frozen=True)
class TrustSet:
    ids: tuple[int, ...]
    per_class_counts: np.ndarray
    scores: dict


def _ensemble_probs(params_ensemble, x: np.ndarray) -> np.ndarray:
    """Stacked member probabilities, shape (E, n, C)."""
    members = list(params_ensemble)
    if not members:
        raise ValueError("params_ensemble must contain at least one model")
    return np.stack([learner.predict_proba(p, x) for p in members])


def el2n_scores(params_ensemble, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean over ensemble members of ||softmax - onehot||_2 per sample."""
    probs = _ensemble_probs(params_ensemble, x)
    num_classes = probs.shape[2]
    if np.any(y < 0) or np.any(y >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    onehot = np.eye(num_classes)[y]
    return np.linalg.norm(probs - onehot[None, :, :], axis=2).mean(axis=0)


def el2n_score(params_ensemble, sample) -> float:
    if sample.label is None:
        raise ValueError(f"sample {sample.id} has no label")
    x = sample.features[None, :]
    y = np.array([sample.label])
    return float(el2n_scores(params_ensemble, x, y)[0])


def cl_scores(params_ensemble, x: np.ndarray, y: np.ndarray,
              cfg: TrustSetConfig, sl_cfg: SuperLossConfig) -> np.ndarray:
    """Curriculum-weighted scores: sigma(loss) * el2n, or plain el2n when off."""
    el2n = el2n_scores(params_ensemble, x, y)
    if not cfg.use_curriculum:
        return el2n
    probs = _ensemble_probs(params_ensemble, x)
    picked = np.maximum(probs[:, np.arange(len(y)), y], learner.PROB_FLOOR)
    losses = (-np.log(picked)).mean(axis=0)
    resolved = sl_cfg.resolved(probs.shape[2])
    return sigma_weights(losses, resolved) * el2n


def cl_score(params_ensemble, sample, cfg: TrustSetConfig,
             sl_cfg: SuperLossConfig) -> float:
    if sample.label is None:
        raise ValueError(f"sample {sample.id} has no label")
    x = sample.features[None, :]
    y = np.array([sample.label])
    return float(cl_scores(params_ensemble, x, y, cfg, sl_cfg)[0])


def _quotas(size: int, num_classes: int) -> np.ndarray:
    base = size // num_classes
    quotas = np.full(num_classes, base, dtype=np.int64)
    quotas[: size % num_classes] += 1
    return quotas


def _scored_by_class(samples, params_ensemble, cfg, sl_cfg):
    ids = np.array([s.id for s in samples])
    x = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples])
    scores = cl_scores(params_ensemble, x, y, cfg, sl_cfg)
    num_classes = params_ensemble[0].num_classes
    per_class: list[list[tuple[int, float]]] = [[] for _ in range(num_classes)]
    for sid, label, score in zip(ids.tolist(), y.tolist(), scores.tolist()):
        per_class[label].append((sid, score))
    for bucket in per_class:
        bucket.sort(key=lambda t: (-t[1], t[0]))
    return per_class, dict(zip(ids.tolist(), scores.tolist()))


def _assemble(per_class, score_map, picked_per_class, budget, num_classes,
              exclude=frozenset()):
    """Fill leftover slots greedily by score from the unpicked remainder."""
    chosen: list[int] = []
    counts = np.zeros(num_classes, dtype=np.int64)
    chosen_set = set()
    for c in range(num_classes):
        for sid, _ in picked_per_class[c]:
            chosen.append(sid)
            chosen_set.add(sid)
            counts[c] += 1
    deficit = budget - len(chosen)
    if deficit > 0:
        remaining = []
        for c in range(num_classes):
            for sid, score in per_class[c]:
                if sid not in chosen_set and sid not in exclude:
                    remaining.append((sid, score, c))
        remaining.sort(key=lambda t: (-t[1], t[0]))
        for sid, _, c in remaining[:deficit]:
            chosen.append(sid)
            counts[c] += 1
    return TrustSet(tuple(chosen), counts,
                    {sid: score_map[sid] for sid in chosen})


def extract_trustset(labeled_samples, params_ensemble, cfg: TrustSetConfig,
                     sl_cfg: SuperLossConfig) -> TrustSet:
    """Top scorers per class under near-equal quotas, deficits redistributed."""
    samples = list(labeled_samples)
    if not samples:
        raise ValueError("cannot extract a trust set from an empty labeled set")
    size = cfg.size if cfg.size is not None else math.ceil(len(samples) / 2)
    if size < 1:
        raise ValueError("trust set size must be >= 1")
    size = min(size, len(samples))
    num_classes = params_ensemble[0].num_classes
    per_class, score_map = _scored_by_class(samples, params_ensemble, cfg, sl_cfg)
    quotas = _quotas(size, num_classes)
    picked = [per_class[c][: quotas[c]] for c in range(num_classes)]
    return _assemble(per_class, score_map, picked, size, num_classes)


def second_best_trustset(labeled_samples, params_ensemble, cfg: TrustSetConfig,
                         sl_cfg: SuperLossConfig) -> TrustSet:
    """Ablation variant: skip each class's top quota and take the next quota.

    The skipped top group is never used, including during redistribution, so
    the result can be smaller than the requested size on small classes.
    """
    samples = list(labeled_samples)
    if not samples:
        raise ValueError("cannot extract a trust set from an empty labeled set")
    size = cfg.size if cfg.size is not None else math.ceil(len(samples) / 2)
    if size < 1:
        raise ValueError("trust set size must be >= 1")
    num_classes = params_ensemble[0].num_classes
    per_class, score_map = _scored_by_class(samples, params_ensemble, cfg, sl_cfg)
    quotas = _quotas(min(size, len(samples)), num_classes)
    picked = [per_class[c][quotas[c]: 2 * quotas[c]] for c in range(num_classes)]
    skipped = frozenset(sid for c in range(num_classes)
                        for sid, _ in per_class[c][: quotas[c]])
    budget = min(size, len(samples) - len(skipped))
    return _assemble(per_class, score_map, picked, budget, num_classes,
                     exclude=skipped)


def export_trustset_csv(trustset: TrustSet, labels_by_id, path) -> None:
    """Debug dump: one row per member with (id, class, score, rank)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "score", "rank"])
        for rank, sid in enumerate(trustset.ids, start=1):
            writer.writerow([sid, labels_by_id[sid],
                             f"{trustset.scores[sid]:.10g}", rank])
