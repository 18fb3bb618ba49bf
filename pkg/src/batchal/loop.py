"""The active-learning loop, its strategies, and the evaluation metrics.

One run: train the learner from scratch on the labeled set, record test
accuracy, select a batch from the pool with the configured strategy, reveal
its labels, repeat until the budget is exhausted.  The reward-policy
strategy additionally extracts a trust set, fills a fresh replay buffer from
simulated environments and trains a fresh reward net each iteration.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import learner
from .clustering import ClusterConfig
from .dataset import Dataset, DatasetSplit, init_split, reveal_labels
from .policy import (ReplayBuffer, RLConfig, build_env_transitions,
                     init_reward_net, select_batch, train_reward_net)
from .strategies import (select_coreset, select_entropy, select_margin,
                         select_oracle, select_pseudoscore, select_random)
from .superloss import SuperLossConfig
from .trustset import TrustSetConfig, extract_trustset, second_best_trustset
from .util import rng_from, seed_from

log = logging.getLogger(__name__)

STRATEGIES = ("bralt", "diffset", "nocl", "random", "entropy", "margin",
              "coreset", "pseudoscore", "oracle")


@dataclass(frozen=True)
class ALConfig:
    initial_labeled: int = 50
    budget: int = 300
    batch: int = 25
    strategy: str = "bralt"
    seed: int = 0
    test_fraction: float = 0.2
    init_policy: str = "random"
    rare_count: int = 50
    main_count: int = 950
    learner: learner.TrainConfig = field(default_factory=learner.TrainConfig)
    trustset: TrustSetConfig = field(default_factory=TrustSetConfig)
    superloss: SuperLossConfig = field(default_factory=SuperLossConfig)
    clusters: ClusterConfig = field(default_factory=ClusterConfig)
    rl: RLConfig = field(default_factory=RLConfig)

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.budget < self.initial_labeled:
            raise ValueError("budget must be >= initial_labeled")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    labeled_count: int
    accuracy: float
    seconds: float
    diagnostics: dict


@dataclass
class RunLog:
    strategy: str
    seed: int
    budget: int
    records: list[IterationRecord]
    final_params: learner.ModelParams | None = None


def _train_ensemble(labeled_samples, config: ALConfig, iteration: int,
                    num_classes: int) -> list[learner.ModelParams]:
    members = []
    for member in range(config.trustset.ensemble_size):
        cfg = replace(config.learner,
                      seed=seed_from(config.seed, iteration, 17, member))
        members.append(learner.train_from_scratch(labeled_samples, cfg,
                                                  num_classes=num_classes))
    return members


def _select_bralt(split: DatasetSplit, params_list, b: int, config: ALConfig,
                  iteration: int):
    labeled = split.labeled()
    ts_cfg = config.trustset
    if config.strategy == "nocl":
        ts_cfg = replace(ts_cfg, use_curriculum=False)
    extractor = second_best_trustset if config.strategy == "diffset" \
        else extract_trustset
    ts = extractor(labeled, params_list, ts_cfg, config.superloss)

    buffer = ReplayBuffer()
    for pair in range(config.rl.n_env_pairs):
        transitions = []
        for attempt in range(config.rl.max_resamples + 1):
            pair_seed = seed_from(config.seed, iteration, 29, pair, attempt)
            transitions = build_env_transitions(
                labeled, ts, params_list[0], config.clusters, config.rl,
                pair_seed)
            if transitions:
                break
            log.warning("iteration %d env pair %d produced no transitions; "
                        "resampling", iteration, pair)
        buffer.add(transitions)
    if len(buffer) == 0:
        raise RuntimeError(
            f"iteration {iteration}: no transitions from any environment pair"
        )

    params = params_list[0]
    feat_dim = params.hidden if params.hidden else params.dim
    net = init_reward_net(6 * feat_dim, config.rl.hidden_width,
                          seed_from(config.seed, iteration, 31))
    net = train_reward_net(net, buffer,
                           replace(config.rl,
                                   seed=seed_from(config.seed, iteration, 33)))
    ids = select_batch(net, labeled, split.unlabeled(), params, b,
                       config.clusters, seed_from(config.seed, iteration, 37),
                       config.rl.selection_order)
    labeled_counts = np.bincount([s.label for s in labeled],
                                 minlength=params.num_classes)
    diag = {
        "trustset_class_counts": ts.per_class_counts.tolist(),
        "labeled_class_counts": labeled_counts.tolist(),
        "buffer_size": len(buffer),
    }
    return ids, diag


def _select(split: DatasetSplit, params_list, b: int, config: ALConfig,
            iteration: int):
    strategy = config.strategy
    rng = rng_from(config.seed, iteration, 23)
    pool = split.unlabeled()
    params = params_list[0]
    if strategy == "random":
        return select_random(pool, b, rng), {}
    if strategy == "entropy":
        return select_entropy(pool, params, b, rng), {}
    if strategy == "margin":
        return select_margin(pool, params, b, rng), {}
    if strategy == "pseudoscore":
        return select_pseudoscore(pool, params, b, rng), {}
    if strategy == "coreset":
        return select_coreset(pool, split.labeled(), params, b), {}
    if strategy == "oracle":
        return select_oracle(pool, params_list, b, config.trustset,
                             config.superloss), {}
    return _select_bralt(split, params_list, b, config, iteration)


def run(dataset: Dataset, config: ALConfig) -> RunLog:
    """Execute the loop until the labeled set reaches the budget."""
    split = init_split(dataset, config.initial_labeled, config.test_fraction,
                       config.seed, policy=config.init_policy,
                       rare_count=config.rare_count,
                       main_count=config.main_count)
    pool_size = len(split.labeled_ids) + len(split.unlabeled_ids)
    if config.budget > pool_size:
        raise ValueError(
            f"budget {config.budget} exceeds train pool size {pool_size}"
        )
    test_samples = split.test()
    if not test_samples:
        raise ValueError("test split is empty; increase test_fraction")

    records: list[IterationRecord] = []
    iteration = 0
    params_list = []
    while True:
        t0 = time.perf_counter()
        labeled_count = len(split.labeled_ids)
        params_list = _train_ensemble(split.labeled(), config, iteration,
                                      dataset.num_classes)
        acc = learner.accuracy(params_list[0], test_samples)
        diag: dict = {}
        done = labeled_count >= config.budget
        if not done:
            b = min(config.batch, config.budget - labeled_count)
            ids, diag = _select(split, params_list, b, config, iteration)
            split = reveal_labels(split, ids)
        records.append(IterationRecord(
            iteration=iteration,
            labeled_count=labeled_count,
            accuracy=acc,
            seconds=time.perf_counter() - t0,
            diagnostics=diag,
        ))
        if done:
            break
        iteration += 1
    return RunLog(config.strategy, config.seed, config.budget, records,
                  final_params=params_list[0])


def run_baseline(strategy: str, dataset: Dataset, config: ALConfig) -> RunLog:
    """Same loop with only the selection rule swapped."""
    return run(dataset, replace(config, strategy=strategy))


def aubc(runlog: RunLog) -> float:
    """Trapezoidal area under accuracy vs budget fraction, normalized to the span.

    A constant-accuracy curve therefore returns that constant; a single
    record returns its accuracy.
    """
    records = runlog.records
    if not records:
        raise ValueError("empty run log")
    if len(records) == 1:
        return records[0].accuracy
    x = np.array([r.labeled_count / runlog.budget for r in records])
    y = np.array([r.accuracy for r in records])
    area = float(((y[1:] + y[:-1]) / 2.0 * np.diff(x)).sum())
    return area / float(x[-1] - x[0])


def f_acc(runlog: RunLog) -> float:
    """Test accuracy once the budget is exhausted."""
    if not runlog.records:
        raise ValueError("empty run log")
    return runlog.records[-1].accuracy


def _accuracy_at(runlog: RunLog, budget: int) -> float:
    for rec in runlog.records:
        if rec.labeled_count == budget:
            return rec.accuracy
    raise ValueError(
        f"run log for {runlog.strategy!r} has no record at budget {budget}"
    )


def penalty_matrix(runlogs_by_method, budgets):
    """Pairwise win counts: e_ij += 1 whenever method i beats j at a budget.

    ``runlogs_by_method`` maps method name to a sequence of run logs, aligned
    across methods (one per benchmark).  Returns (method_names, matrix).
    """
    methods = list(runlogs_by_method)
    lengths = {len(runlogs_by_method[m]) for m in methods}
    if len(lengths) > 1:
        raise ValueError("methods must have aligned benchmark run lists")
    num_benchmarks = lengths.pop() if lengths else 0
    matrix = np.zeros((len(methods), len(methods)), dtype=np.int64)
    for bench in range(num_benchmarks):
        for budget in budgets:
            accs = [_accuracy_at(runlogs_by_method[m][bench], budget)
                    for m in methods]
            for i in range(len(methods)):
                for j in range(len(methods)):
                    if i != j and accs[i] > accs[j]:
                        matrix[i, j] += 1
    return methods, matrix


def mean_and_halfwidth(values) -> tuple[float, float]:
    """Mean and t-based 95% confidence half-width across seeds."""
    arr = np.asarray(list(values), dtype=np.float64)
    n = len(arr)
    if n == 0:
        raise ValueError("no values")
    if n == 1:
        return float(arr[0]), 0.0
    half = float(stats.t.ppf(0.975, n - 1) * arr.std(ddof=1) / math.sqrt(n))
    return float(arr.mean()), half


def summarize(runlogs) -> dict:
    """AUBC / final-accuracy means and half-widths over seed repetitions."""
    runlogs = list(runlogs)
    aubc_mean, aubc_half = mean_and_halfwidth([aubc(r) for r in runlogs])
    facc_mean, facc_half = mean_and_halfwidth([f_acc(r) for r in runlogs])
    return {
        "seeds": len(runlogs),
        "aubc_mean": aubc_mean,
        "aubc_halfwidth": aubc_half,
        "facc_mean": facc_mean,
        "facc_halfwidth": facc_half,
    }


def mean_curve(runlogs):
    """Aligned per-iteration mean accuracy and half-width across seeds."""
    runlogs = list(runlogs)
    counts = [tuple(r.labeled_count for r in rl.records) for rl in runlogs]
    if len(set(counts)) != 1:
        raise ValueError("run logs have mismatched budget schedules")
    series = np.array([[rec.accuracy for rec in rl.records] for rl in runlogs])
    means, halves = zip(*(mean_and_halfwidth(series[:, k])
                          for k in range(series.shape[1])))
    return np.array(counts[0]), np.array(means), np.array(halves)


RUNLOG_COLUMNS = ("strategy", "seed", "iteration", "labeled_count",
                  "budget_fraction", "accuracy", "seconds")


def write_runlog_csv(runlog: RunLog, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RUNLOG_COLUMNS)
        for rec in runlog.records:
            # full-precision accuracy so reports recompute identical metrics
            writer.writerow([
                runlog.strategy, runlog.seed, rec.iteration, rec.labeled_count,
                f"{rec.labeled_count / runlog.budget:.10g}",
                repr(rec.accuracy), f"{rec.seconds:.6g}",
            ])


def read_runlog_csv(path) -> RunLog:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: empty run log")
    records = [IterationRecord(
        iteration=int(r["iteration"]),
        labeled_count=int(r["labeled_count"]),
        accuracy=float(r["accuracy"]),
        seconds=float(r["seconds"]),
        diagnostics={},
    ) for r in rows]
    last = rows[-1]
    budget = int(round(int(last["labeled_count"])
                       / float(last["budget_fraction"])))
    return RunLog(rows[0]["strategy"], int(rows[0]["seed"]), budget, records)
