"""Pinned benchmark configurations for the acceptance suite.

Everything here is frozen: dataset seeds, run seeds and every hyperparameter.
The suite is fully deterministic, so these settings always reproduce the
same numbers.
"""

from batchal.clustering import ClusterConfig
from batchal.dataset import ImbalanceSpec, apply_imbalance, gen_gaussian_mixture
from batchal.learner import TrainConfig
from batchal.loop import ALConfig
from batchal.policy import RLConfig
from batchal.superloss import SuperLossConfig
from batchal.trustset import TrustSetConfig

BENCHMARK_SEEDS = (0, 1, 2, 3, 4)
LONGTAIL_SEEDS = (0, 1, 2)

_DATASET_SEED = 1234


def benchmark_dataset():
    """Gaussian mixture, 10 classes, dim 16, linear 1:2:...:10 imbalance."""
    data = gen_gaussian_mixture(10, 16, 200, 3.0, _DATASET_SEED)
    return apply_imbalance(
        data, ImbalanceSpec(kind="linear", ratios=tuple(range(1, 11))),
        _DATASET_SEED)


def benchmark_config(strategy: str, seed: int) -> ALConfig:
    return ALConfig(
        initial_labeled=50, budget=300, batch=25, strategy=strategy, seed=seed,
        test_fraction=0.2,
        learner=TrainConfig(hidden=32, epochs=100, batch_size=32,
                            learning_rate=0.1, momentum=0.9,
                            weight_decay=1e-4),
        trustset=TrustSetConfig(),
        superloss=SuperLossConfig(),
        clusters=ClusterConfig(normalize_features=True,
                               actions_per_cluster=25),
        rl=RLConfig(hidden_width=128,
                    selection_order="per-cluster-round-robin"),
    )


def longtail_dataset():
    """Exponential long-tail mixture with decay factor 10."""
    data = gen_gaussian_mixture(10, 16, 400, 3.0, _DATASET_SEED)
    return apply_imbalance(
        data, ImbalanceSpec(kind="exponential", factor=10.0), _DATASET_SEED)


def longtail_config(seed: int) -> ALConfig:
    return ALConfig(
        initial_labeled=250, budget=400, batch=25, strategy="bralt", seed=seed,
        test_fraction=0.2,
        learner=TrainConfig(hidden=32, epochs=100, batch_size=32,
                            learning_rate=0.1, momentum=0.9,
                            weight_decay=1e-4),
        trustset=TrustSetConfig(size=30),
        superloss=SuperLossConfig(),
        clusters=ClusterConfig(normalize_features=True,
                               actions_per_cluster=25),
        rl=RLConfig(hidden_width=128,
                    selection_order="per-cluster-round-robin"),
    )
