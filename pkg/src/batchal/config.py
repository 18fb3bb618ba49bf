"""Declarative experiment configuration: TOML parsing, validation, emission.

Every tunable of the pipeline surfaces as a named key with its default.
Validation is strict (unknown keys are rejected) and collects every
violation before failing so a config file can be fixed in one pass.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import tomli

from .clustering import ClusterConfig
from .dataset import (Dataset, ImbalanceSpec, apply_imbalance,
                      gen_gaussian_mixture, load_csv, LABEL_COLUMN)
from .learner import TrainConfig
from .loop import ALConfig, STRATEGIES
from .policy import RLConfig, SELECTION_ORDERS
from .superloss import SuperLossConfig
from .trustset import TrustSetConfig


class ConfigError(ValueError):
    """Invalid experiment configuration; carries one message per violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class DatasetBlock:
    kind: str = "gaussian"
    classes: int = 10
    dim: int = 16
    per_class: int = 200
    class_sep: float = 3.0
    seed: int = 1234
    path: str | None = None
    label_column: str = LABEL_COLUMN
    imbalance: ImbalanceSpec = field(default_factory=ImbalanceSpec)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    initial_labeled: int = 50
    test_fraction: float = 0.2
    init_policy: str = "random"
    rare_count: int = 50
    main_count: int = 950
    budget: int = 300
    batch: int = 25
    strategies: tuple[str, ...] = ("bralt", "random")
    seeds: tuple[int, ...] = (0,)
    learner: TrainConfig = field(default_factory=TrainConfig)
    trustset: TrustSetConfig = field(default_factory=TrustSetConfig)
    superloss: SuperLossConfig = field(default_factory=SuperLossConfig)
    clusters: ClusterConfig = field(default_factory=ClusterConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    output_dir: str = "results"

    def al_config(self, strategy: str, seed: int) -> ALConfig:
        return ALConfig(
            initial_labeled=self.initial_labeled,
            budget=self.budget,
            batch=self.batch,
            strategy=strategy,
            seed=seed,
            test_fraction=self.test_fraction,
            init_policy=self.init_policy,
            rare_count=self.rare_count,
            main_count=self.main_count,
            learner=self.learner,
            trustset=self.trustset,
            superloss=self.superloss,
            clusters=self.clusters,
            rl=self.rl,
        )


_SCHEMA = {
    "dataset": {"kind", "classes", "dim", "per_class", "class_sep", "seed",
                "path", "label_column", "imbalance"},
    "dataset.imbalance": {"kind", "ratios", "factor"},
    "split": {"initial_labeled", "test_fraction", "policy", "rare_count",
              "main_count"},
    "al": {"budget", "batch", "strategies", "seeds"},
    "learner": {"hidden", "epochs", "batch_size", "learning_rate", "momentum",
                "weight_decay", "loss_mode"},
    "trustset": {"size", "use_curriculum", "ensemble_size"},
    "superloss": {"tau", "lambda"},
    "clusters": {"labeled_k", "unlabeled_k", "actions_per_cluster", "max_iter",
                 "tol", "normalize_features", "distance_max_points"},
    "rl": {"env_pairs", "env_labeled_fraction", "steps_per_pair", "batch_size",
           "learning_rate", "hidden_width", "selection_order"},
    "output": {"dir"},
}


class _Checker:
    def __init__(self, raw: dict):
        self.raw = raw
        self.errors: list[str] = []

    def table(self, name: str) -> dict:
        parts = name.split(".")
        node = self.raw
        for p in parts:
            node = node.get(p, {})
            if not isinstance(node, dict):
                self.errors.append(f"{name}: expected a table")
                return {}
        unknown = set(node) - _SCHEMA[name]
        if name == "dataset":
            unknown -= {"imbalance"}
        for key in sorted(unknown):
            self.errors.append(f"{name}.{key}: unknown key")
        return node

    def get(self, table: dict, table_name: str, key: str, kind, default,
            check=None, msg=""):
        if key not in table:
            return default
        value = table[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and (not isinstance(value, kind)
                                 or isinstance(value, bool) and kind is not bool):
            self.errors.append(f"{table_name}.{key}: expected {kind.__name__}")
            return default
        if check is not None and not check(value):
            self.errors.append(f"{table_name}.{key}: {msg}")
            return default
        return value


def from_dict(raw: dict) -> ExperimentConfig:
    """Build and fully validate a config from parsed TOML data."""
    c = _Checker(raw)
    for top in set(raw) - {"dataset", "split", "al", "learner", "trustset",
                           "superloss", "clusters", "rl", "output"}:
        c.errors.append(f"{top}: unknown table")

    ds = c.table("dataset")
    kind = c.get(ds, "dataset", "kind", str, "gaussian",
                 lambda v: v in ("gaussian", "csv"), "must be gaussian or csv")
    classes = c.get(ds, "dataset", "classes", int, 10, lambda v: v >= 2, ">= 2")
    dim = c.get(ds, "dataset", "dim", int, 16, lambda v: v >= 2, ">= 2")
    per_class = c.get(ds, "dataset", "per_class", int, 200,
                      lambda v: v >= 2, ">= 2")
    class_sep = c.get(ds, "dataset", "class_sep", float, 3.0,
                      lambda v: v > 0, "must be positive")
    ds_seed = c.get(ds, "dataset", "seed", int, 1234)
    path = c.get(ds, "dataset", "path", str, None)
    label_column = c.get(ds, "dataset", "label_column", str, LABEL_COLUMN)
    if kind == "csv" and path is None:
        c.errors.append("dataset.path: required when kind is csv")

    imb = c.table("dataset.imbalance")
    imb_kind = c.get(imb, "dataset.imbalance", "kind", str, "none",
                     lambda v: v in ("none", "linear", "exponential"),
                     "must be none, linear or exponential")
    ratios = c.get(imb, "dataset.imbalance", "ratios", list, None,
                   lambda v: all(isinstance(r, (int, float)) and r > 0 for r in v),
                   "must be positive numbers")
    factor = c.get(imb, "dataset.imbalance", "factor", float, None,
                   lambda v: v > 1, "must be > 1")
    if imb_kind == "linear" and ratios is None:
        c.errors.append("dataset.imbalance.ratios: required for linear")
    if imb_kind == "exponential" and factor is None:
        c.errors.append("dataset.imbalance.factor: required for exponential")

    sp = c.table("split")
    initial_labeled = c.get(sp, "split", "initial_labeled", int, 50,
                            lambda v: v >= 1, ">= 1")
    test_fraction = c.get(sp, "split", "test_fraction", float, 0.2,
                          lambda v: 0 <= v < 1, "in [0, 1)")
    init_policy = c.get(sp, "split", "policy", str, "random",
                        lambda v: v in ("random", "twisted-main", "twisted-rare"),
                        "unknown policy")
    rare_count = c.get(sp, "split", "rare_count", int, 50, lambda v: v >= 0, ">= 0")
    main_count = c.get(sp, "split", "main_count", int, 950, lambda v: v >= 0, ">= 0")

    al = c.table("al")
    budget = c.get(al, "al", "budget", int, 300, lambda v: v >= 1, ">= 1")
    batch = c.get(al, "al", "batch", int, 25, lambda v: v >= 1, ">= 1")
    strategies = c.get(al, "al", "strategies", list, ["bralt", "random"],
                       lambda v: v and all(s in STRATEGIES for s in v),
                       f"each must be one of {', '.join(STRATEGIES)}")
    seeds = c.get(al, "al", "seeds", list, [0],
                  lambda v: v and all(isinstance(s, int) for s in v),
                  "must be a non-empty list of integers")
    if budget < initial_labeled:
        c.errors.append("al.budget: must be >= split.initial_labeled")

    lr_tbl = c.table("learner")
    hidden = c.get(lr_tbl, "learner", "hidden", int, 32, lambda v: v >= 0, ">= 0")
    epochs = c.get(lr_tbl, "learner", "epochs", int, 30, lambda v: v >= 1, ">= 1")
    l_batch = c.get(lr_tbl, "learner", "batch_size", int, 32,
                    lambda v: v >= 1, ">= 1")
    l_lr = c.get(lr_tbl, "learner", "learning_rate", float, 0.1,
                 lambda v: v > 0, "must be positive")
    momentum = c.get(lr_tbl, "learner", "momentum", float, 0.9,
                     lambda v: 0 <= v < 1, "in [0, 1)")
    weight_decay = c.get(lr_tbl, "learner", "weight_decay", float, 0.0,
                         lambda v: v >= 0, ">= 0")
    loss_mode = c.get(lr_tbl, "learner", "loss_mode", str, "plain-ce",
                      lambda v: v in ("plain-ce", "superloss"),
                      "must be plain-ce or superloss")

    ts = c.table("trustset")
    ts_size = c.get(ts, "trustset", "size", int, None, lambda v: v >= 1, ">= 1")
    use_curriculum = c.get(ts, "trustset", "use_curriculum", bool, True)
    ensemble_size = c.get(ts, "trustset", "ensemble_size", int, 1,
                          lambda v: v >= 1, ">= 1")

    sl = c.table("superloss")
    tau = c.get(sl, "superloss", "tau", float, None,
                lambda v: math.isfinite(v), "must be finite")
    lam = c.get(sl, "superloss", "lambda", float, 1.0,
                lambda v: v > 0, "must be positive")

    cl = c.table("clusters")
    labeled_k = c.get(cl, "clusters", "labeled_k", int, None,
                      lambda v: v >= 1, ">= 1")
    unlabeled_k = c.get(cl, "clusters", "unlabeled_k", int, None,
                        lambda v: v >= 1, ">= 1")
    actions = c.get(cl, "clusters", "actions_per_cluster", int, 5,
                    lambda v: v >= 1, ">= 1")
    max_iter = c.get(cl, "clusters", "max_iter", int, 100, lambda v: v >= 1, ">= 1")
    tol = c.get(cl, "clusters", "tol", float, 1e-6, lambda v: v >= 0, ">= 0")
    normalize = c.get(cl, "clusters", "normalize_features", bool, False)
    max_pts = c.get(cl, "clusters", "distance_max_points", int, 256,
                    lambda v: v >= 1, ">= 1")

    rl_tbl = c.table("rl")
    env_pairs = c.get(rl_tbl, "rl", "env_pairs", int, 30, lambda v: v >= 1, ">= 1")
    env_frac = c.get(rl_tbl, "rl", "env_labeled_fraction", float, 0.2,
                     lambda v: 0 < v < 1, "in (0, 1)")
    steps = c.get(rl_tbl, "rl", "steps_per_pair", int, 20, lambda v: v >= 1, ">= 1")
    rl_batch = c.get(rl_tbl, "rl", "batch_size", int, 100, lambda v: v >= 1, ">= 1")
    rl_lr = c.get(rl_tbl, "rl", "learning_rate", float, 0.01,
                  lambda v: v > 0, "must be positive")
    width = c.get(rl_tbl, "rl", "hidden_width", int, 512, lambda v: v >= 1, ">= 1")
    order = c.get(rl_tbl, "rl", "selection_order", str, "global",
                  lambda v: v in SELECTION_ORDERS,
                  f"must be one of {', '.join(SELECTION_ORDERS)}")

    out = c.table("output")
    out_dir = c.get(out, "output", "dir", str, "results")

    if c.errors:
        raise ConfigError(sorted(c.errors))

    return ExperimentConfig(
        dataset=DatasetBlock(
            kind=kind, classes=classes, dim=dim, per_class=per_class,
            class_sep=class_sep, seed=ds_seed, path=path,
            label_column=label_column,
            imbalance=ImbalanceSpec(
                kind=imb_kind,
                ratios=tuple(float(r) for r in ratios) if ratios else None,
                factor=factor,
            ),
        ),
        initial_labeled=initial_labeled, test_fraction=test_fraction,
        init_policy=init_policy, rare_count=rare_count, main_count=main_count,
        budget=budget, batch=batch,
        strategies=tuple(strategies), seeds=tuple(seeds),
        learner=TrainConfig(hidden=hidden, epochs=epochs, batch_size=l_batch,
                            learning_rate=l_lr, momentum=momentum,
                            weight_decay=weight_decay, loss_mode=loss_mode),
        trustset=TrustSetConfig(size=ts_size, use_curriculum=use_curriculum,
                                ensemble_size=ensemble_size),
        superloss=SuperLossConfig(tau=tau, lam=lam),
        clusters=ClusterConfig(labeled_k=labeled_k, unlabeled_k=unlabeled_k,
                               actions_per_cluster=actions, max_iter=max_iter,
                               tol=tol, normalize_features=normalize,
                               distance_max_points=max_pts),
        rl=RLConfig(n_env_pairs=env_pairs, env_labeled_fraction=env_frac,
                    steps_per_pair=steps, batch_size=rl_batch,
                    learning_rate=rl_lr, hidden_width=width,
                    selection_order=order),
        output_dir=out_dir,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: invalid TOML: {exc}"]) from exc
    return from_dict(raw)


def to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical nested dict; from_dict(to_dict(cfg)) reproduces cfg."""
    dataset: dict = {
        "kind": cfg.dataset.kind,
        "classes": cfg.dataset.classes,
        "dim": cfg.dataset.dim,
        "per_class": cfg.dataset.per_class,
        "class_sep": cfg.dataset.class_sep,
        "seed": cfg.dataset.seed,
        "label_column": cfg.dataset.label_column,
    }
    if cfg.dataset.path is not None:
        dataset["path"] = cfg.dataset.path
    imb: dict = {"kind": cfg.dataset.imbalance.kind}
    if cfg.dataset.imbalance.ratios is not None:
        imb["ratios"] = list(cfg.dataset.imbalance.ratios)
    if cfg.dataset.imbalance.factor is not None:
        imb["factor"] = cfg.dataset.imbalance.factor
    dataset["imbalance"] = imb

    superloss: dict = {"lambda": cfg.superloss.lam}
    if cfg.superloss.tau is not None:
        superloss["tau"] = cfg.superloss.tau
    trustset: dict = {
        "use_curriculum": cfg.trustset.use_curriculum,
        "ensemble_size": cfg.trustset.ensemble_size,
    }
    if cfg.trustset.size is not None:
        trustset["size"] = cfg.trustset.size
    clusters: dict = {
        "actions_per_cluster": cfg.clusters.actions_per_cluster,
        "max_iter": cfg.clusters.max_iter,
        "tol": cfg.clusters.tol,
        "normalize_features": cfg.clusters.normalize_features,
        "distance_max_points": cfg.clusters.distance_max_points,
    }
    if cfg.clusters.labeled_k is not None:
        clusters["labeled_k"] = cfg.clusters.labeled_k
    if cfg.clusters.unlabeled_k is not None:
        clusters["unlabeled_k"] = cfg.clusters.unlabeled_k

    return {
        "dataset": dataset,
        "split": {
            "initial_labeled": cfg.initial_labeled,
            "test_fraction": cfg.test_fraction,
            "policy": cfg.init_policy,
            "rare_count": cfg.rare_count,
            "main_count": cfg.main_count,
        },
        "al": {
            "budget": cfg.budget,
            "batch": cfg.batch,
            "strategies": list(cfg.strategies),
            "seeds": list(cfg.seeds),
        },
        "learner": {
            "hidden": cfg.learner.hidden,
            "epochs": cfg.learner.epochs,
            "batch_size": cfg.learner.batch_size,
            "learning_rate": cfg.learner.learning_rate,
            "momentum": cfg.learner.momentum,
            "weight_decay": cfg.learner.weight_decay,
            "loss_mode": cfg.learner.loss_mode,
        },
        "trustset": trustset,
        "superloss": superloss,
        "clusters": clusters,
        "rl": {
            "env_pairs": cfg.rl.n_env_pairs,
            "env_labeled_fraction": cfg.rl.env_labeled_fraction,
            "steps_per_pair": cfg.rl.steps_per_pair,
            "batch_size": cfg.rl.batch_size,
            "learning_rate": cfg.rl.learning_rate,
            "hidden_width": cfg.rl.hidden_width,
            "selection_order": cfg.rl.selection_order,
        },
        "output": {"dir": cfg.output_dir},
    }


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        return text if any(ch in text for ch in ".eE") else text + ".0"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_emit_value(v) for v in value) + "]"
    raise TypeError(f"cannot emit {type(value).__name__} as TOML")


def emit_toml(data: dict) -> str:
    """Serialize the canonical config dict back to TOML text."""
    lines: list[str] = []

    def emit_table(name: str, table: dict) -> None:
        subtables = {k: v for k, v in table.items() if isinstance(v, dict)}
        scalars = {k: v for k, v in table.items() if not isinstance(v, dict)}
        lines.append(f"[{name}]")
        for key in scalars:
            lines.append(f"{key} = {_emit_value(scalars[key])}")
        lines.append("")
        for key, sub in subtables.items():
            emit_table(f"{name}.{key}", sub)

    for name, table in data.items():
        emit_table(name, table)
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(emit_toml(to_dict(cfg)).encode()).hexdigest()


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    block = cfg.dataset
    if block.kind == "csv":
        data = load_csv(block.path, block.label_column)
    else:
        data = gen_gaussian_mixture(block.classes, block.dim, block.per_class,
                                    block.class_sep, block.seed)
    if block.imbalance.kind != "none":
        data = apply_imbalance(data, block.imbalance, block.seed)
    return data
