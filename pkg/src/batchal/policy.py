"""Reward-regression selection policy.

Simulated environments are drawn from the labeled set: a small "labeled"
part and a larger "pool" part, clustered in feature space.  Each pool
cluster yields one state (mean/variance of itself and of its nearest
labeled cluster) and its sub-clusters are candidate actions whose reward is
the negative Wasserstein distance to the trust-set members inside that
cluster.  A fully connected regressor is fit to those rewards by SGD on MSE
and, at selection time, action groups are taken in descending order of
predicted reward.  The problem is single-step, so the regressor is the
Q-function.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import learner
from .clustering import (Cluster, ClusterConfig, action_groups, kmeans,
                         nearest_labeled_cluster)
from .transport import wasserstein
from .util import rng_from, seed_from

SELECTION_ORDERS = ("global", "per-cluster-round-robin")


@dataclass(frozen=True)
class RLConfig:
    n_env_pairs: int = 30
    env_labeled_fraction: float = 0.2
    steps_per_pair: int = 20
    batch_size: int = 100
    learning_rate: float = 0.01
    hidden_width: int = 512
    selection_order: str = "global"
    seed: int = 0
    max_resamples: int = 5

    def __post_init__(self) -> None:
        if min(self.n_env_pairs, self.steps_per_pair, self.batch_size,
               self.hidden_width) < 1:
            raise ValueError("RL sizes must all be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.env_labeled_fraction < 1.0:
            raise ValueError("env_labeled_fraction must be in (0, 1)")
        if self.selection_order not in SELECTION_ORDERS:
            raise ValueError(f"unknown selection_order {self.selection_order!r}")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray   # [mean, var] of nearest labeled cluster and pool cluster
    action: np.ndarray  # [mean, var] of the candidate group
    reward: float       # -wasserstein(group, trust members in the cluster)


class ReplayBuffer:
    """Append-only store of transitions; cleared between AL iterations."""

    def __init__(self) -> None:
        self.transitions: list[Transition] = []

    def add(self, transitions) -> None:
        self.transitions.extend(transitions)

    def clear(self) -> None:
        self.transitions.clear()

    def __len__(self) -> int:
        return len(self.transitions)

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.stack([np.concatenate([t.state, t.action])
                      for t in self.transitions])
        r = np.array([t.reward for t in self.transitions])
        return x, r

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            sdim = len(self.transitions[0].state) if self.transitions else 0
            adim = len(self.transitions[0].action) if self.transitions else 0
            writer.writerow([f"s{k}" for k in range(sdim)]
                            + [f"a{k}" for k in range(adim)] + ["reward"])
            for t in self.transitions:
                writer.writerow([f"{v:.10g}" for v in t.state.tolist()]
                                + [f"{v:.10g}" for v in t.action.tolist()]
                                + [f"{t.reward:.10g}"])


@dataclass
class RewardNet:
    """Fully connected regressor, ReLU hidden layers, scalar output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "RewardNet":
        return RewardNet([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def init_reward_net(input_dim: int, hidden_width: int, seed: int,
                    hidden_layers: int = 2) -> RewardNet:
    rng = rng_from(seed)
    sizes = [input_dim] + [hidden_width] * hidden_layers + [1]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-lim, lim, size=fan_out))
    return RewardNet(weights, biases)


def _forward(net: RewardNet, x: np.ndarray):
    acts = [x]
    a = x
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        a = np.maximum(a @ w + b, 0.0)
        acts.append(a)
    out = a @ net.weights[-1] + net.biases[-1]
    return out[:, 0], acts


def predict_reward(net: RewardNet, state, action) -> float:
    x = np.concatenate([np.asarray(state, dtype=np.float64),
                        np.asarray(action, dtype=np.float64)])[None, :]
    if x.shape[1] != net.input_dim:
        raise ValueError(f"expected input of dimension {net.input_dim}")
    return float(_forward(net, x)[0][0])


def train_reward_net(net: RewardNet, buffer: ReplayBuffer, cfg: RLConfig,
                     num_steps: int | None = None) -> RewardNet:
    """SGD on mean squared error over seeded uniform batches from the buffer.

    Runs n_env_pairs * steps_per_pair gradient steps unless num_steps
    overrides that total.  Batches are drawn without replacement when the
    buffer is large enough, with replacement otherwise.
    """
    if len(buffer) == 0:
        raise ValueError("cannot train on an empty replay buffer")
    steps = cfg.n_env_pairs * cfg.steps_per_pair if num_steps is None else num_steps
    x, r = buffer.as_arrays()
    out = net.copy()
    rng = rng_from(cfg.seed, 1)
    n = len(r)
    for _ in range(steps):
        idx = rng.choice(n, size=cfg.batch_size, replace=n < cfg.batch_size)
        xb, rb = x[idx], r[idx]
        pred, acts = _forward(out, xb)
        delta = (2.0 / len(rb)) * (pred - rb)
        grad = delta[:, None]
        for layer in range(len(out.weights) - 1, -1, -1):
            gw = acts[layer].T @ grad
            gb = grad.sum(axis=0)
            if layer > 0:
                grad = grad @ out.weights[layer].T
                grad[acts[layer] <= 0.0] = 0.0
            out.weights[layer] -= cfg.learning_rate * gw
            out.biases[layer] -= cfg.learning_rate * gb
    return out


def buffer_mse(net: RewardNet, buffer: ReplayBuffer) -> float:
    x, r = buffer.as_arrays()
    pred, _ = _forward(net, x)
    return float(((pred - r) ** 2).mean())


@dataclass(frozen=True)
class EnvState:
    """One pool cluster's view: state vector, candidate groups, trust members."""

    cluster_index: int
    state: np.ndarray
    u_cluster: Cluster
    nearest_labeled: Cluster
    groups: tuple[Cluster, ...]
    trust_member_ids: tuple[int, ...]


def _feature_map(params, samples, normalize: bool) -> dict[int, np.ndarray]:
    ids = [s.id for s in samples]
    x = np.stack([s.features for s in samples])
    feats = learner.features(params, x)
    if normalize:
        mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        std[std == 0.0] = 1.0
        feats = (feats - mean) / std
    return {i: feats[k] for k, i in enumerate(ids)}


def _extract_states(lab_feats: dict, unl_feats: dict, cluster_cfg: ClusterConfig,
                    num_classes: int, trust_ids: frozenset, seed: int) -> list[EnvState]:
    lab_k = min(cluster_cfg.labeled_k or num_classes, len(lab_feats))
    unl_k = min(cluster_cfg.unlabeled_k or num_classes, len(unl_feats))
    lab_clusters = kmeans(lab_feats, lab_k, seed_from(seed, 1),
                          cluster_cfg.max_iter, cluster_cfg.tol)
    unl_clusters = kmeans(unl_feats, unl_k, seed_from(seed, 2),
                          cluster_cfg.max_iter, cluster_cfg.tol)
    states = []
    for c, u_cluster in enumerate(unl_clusters):
        near = nearest_labeled_cluster(
            u_cluster, lab_clusters, {**lab_feats, **unl_feats},
            max_points=cluster_cfg.distance_max_points,
            seed=seed_from(seed, 3, c))
        groups = action_groups(u_cluster, cluster_cfg.actions_per_cluster,
                               seed_from(seed, 4, c), unl_feats,
                               cluster_cfg.max_iter, cluster_cfg.tol)
        state = np.concatenate([near.mean, near.var,
                                u_cluster.mean, u_cluster.var])
        members = set(u_cluster.member_ids)
        states.append(EnvState(
            cluster_index=c,
            state=state,
            u_cluster=u_cluster,
            nearest_labeled=near,
            groups=tuple(groups),
            trust_member_ids=tuple(sorted(members & trust_ids)),
        ))
    return states


def build_environment(labeled_samples, trust_ids, params,
                      cluster_cfg: ClusterConfig, rl_cfg: RLConfig,
                      pair_seed: int) -> tuple[list[EnvState], dict]:
    """Split the labeled set into a simulated labeled/pool pair and extract states.

    Returns the per-cluster states and the id -> feature map of the
    environment, which reward computation reuses.
    """
    samples = sorted(labeled_samples, key=lambda s: s.id)
    n = len(samples)
    n_lab = int(round(rl_cfg.env_labeled_fraction * n))
    if n_lab < 1 or n - n_lab < 1:
        raise ValueError(
            f"degenerate environment split: {n_lab} labeled / {n - n_lab} pool"
        )
    order = rng_from(pair_seed).permutation(n)
    env_lab = [samples[i] for i in order[:n_lab]]
    env_unl = [samples[i] for i in order[n_lab:]]
    feats = _feature_map(params, env_lab + env_unl,
                         cluster_cfg.normalize_features)
    lab_feats = {s.id: feats[s.id] for s in env_lab}
    unl_feats = {s.id: feats[s.id] for s in env_unl}
    states = _extract_states(lab_feats, unl_feats, cluster_cfg,
                             params.num_classes, frozenset(trust_ids),
                             seed_from(pair_seed, 7))
    return states, feats


def transitions_from_states(states, feats: dict) -> list[Transition]:
    """One transition per (state, action group); clusters without trust members emit none."""
    transitions = []
    for st in states:
        if not st.trust_member_ids:
            continue
        trust_cloud = np.stack([feats[i] for i in st.trust_member_ids])
        for group in st.groups:
            cloud = np.stack([feats[i] for i in group.member_ids])
            reward = -wasserstein(cloud, trust_cloud)
            action = np.concatenate([group.mean, group.var])
            transitions.append(Transition(st.state, action, reward))
    return transitions


def build_env_transitions(labeled_samples, trustset, params,
                          cluster_cfg: ClusterConfig, rl_cfg: RLConfig,
                          pair_seed: int) -> list[Transition]:
    """All (state, action, reward) records for one simulated environment pair."""
    if not trustset.ids:
        raise ValueError("trust set is empty")
    states, feats = build_environment(labeled_samples, trustset.ids, params,
                                      cluster_cfg, rl_cfg, pair_seed)
    return transitions_from_states(states, feats)


def select_batch(net: RewardNet, labeled_samples, unlabeled_samples, params,
                 b: int, cluster_cfg: ClusterConfig, seed: int,
                 selection_order: str = "global") -> list[int]:
    """Pick b pool ids: action groups in descending predicted-reward order.

    The last, partially included group contributes its members nearest to the
    group centroid first.  Only features of the pool are ever touched.
    """
    unlabeled = sorted(unlabeled_samples, key=lambda s: s.id)
    labeled = sorted(labeled_samples, key=lambda s: s.id)
    if b < 1:
        raise ValueError("b must be >= 1")
    if b > len(unlabeled):
        raise ValueError(f"b={b} exceeds pool size {len(unlabeled)}")
    if selection_order not in SELECTION_ORDERS:
        raise ValueError(f"unknown selection_order {selection_order!r}")

    feats = _feature_map(params, labeled + unlabeled,
                         cluster_cfg.normalize_features)
    lab_feats = {s.id: feats[s.id] for s in labeled}
    unl_feats = {s.id: feats[s.id] for s in unlabeled}
    states = _extract_states(lab_feats, unl_feats, cluster_cfg,
                             params.num_classes, frozenset(), seed)

    entries = []  # (score, cluster_index, group_index, group)
    for st in states:
        x = np.stack([np.concatenate([st.state, g.mean, g.var])
                      for g in st.groups])
        scores, _ = _forward(net, x)
        for g_idx, group in enumerate(st.groups):
            entries.append((float(scores[g_idx]), st.cluster_index, g_idx, group))

    if selection_order == "global":
        entries.sort(key=lambda e: (-e[0], e[1], e[2]))
        ordered = entries
    else:
        by_cluster: dict[int, list] = {}
        for e in entries:
            by_cluster.setdefault(e[1], []).append(e)
        for lst in by_cluster.values():
            lst.sort(key=lambda e: (-e[0], e[2]))
        ordered = []
        round_no = 0
        while any(round_no < len(lst) for lst in by_cluster.values()):
            for c in sorted(by_cluster):
                if round_no < len(by_cluster[c]):
                    ordered.append(by_cluster[c][round_no])
            round_no += 1

    chosen: list[int] = []
    for _, _, _, group in ordered:
        if len(chosen) >= b:
            break
        members = sorted(
            group.member_ids,
            key=lambda i: (float(np.linalg.norm(unl_feats[i] - group.centroid)), i),
        )
        chosen.extend(members[: b - len(chosen)])
    return chosen
