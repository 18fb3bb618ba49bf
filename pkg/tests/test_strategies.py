import numpy as np
import pytest

from batchal.clustering import ClusterConfig
from batchal.dataset import Sample, gen_gaussian_mixture, init_split
from batchal.learner import ModelParams, TrainConfig, train_from_scratch
from batchal.policy import RLConfig, init_reward_net, select_batch
from batchal.strategies import (select_coreset, select_entropy, select_margin,
                                select_oracle, select_pseudoscore,
                                select_random)
from batchal.superloss import SuperLossConfig
from batchal.trustset import TrustSetConfig
from batchal.util import rng_from

from _oracles import kcenter_greedy_oracle


class SpySample:
    """Sample stand-in recording label reads."""

    def __init__(self, inner: Sample, counter: dict):
        self._inner = inner
        self._counter = counter

    @property
    def id(self):
        return self._inner.id

    @property
    def features(self):
        return self._inner.features

    @property
    def label(self):
        self._counter[self._inner.id] = self._counter.get(self._inner.id, 0) + 1
        return self._inner.label


def uniform_model(dim, num_classes):
    return ModelParams(np.zeros((dim, 0)), np.zeros(0),
                       np.zeros((dim, num_classes)), np.zeros(num_classes))


def linear_model(w2):
    w2 = np.asarray(w2, dtype=float)
    return ModelParams(np.zeros((w2.shape[0], 0)), np.zeros(0), w2,
                       np.zeros(w2.shape[1]))


def pool_fixture(seed=0, n=12, dim=2):
    rng = np.random.default_rng(seed)
    return [Sample(i, rng.normal(size=dim), int(i % 3)) for i in range(n)]


def test_random_selection_is_seeded_and_valid():
    pool = pool_fixture()
    a = select_random(pool, 5, rng_from(4))
    b = select_random(pool, 5, rng_from(4))
    assert a == b
    assert len(set(a)) == 5
    assert set(a) <= {s.id for s in pool}
    assert select_random(pool, 5, rng_from(5)) != a
    with pytest.raises(ValueError, match="exceeds pool"):
        select_random(pool, 13, rng_from(0))


def test_entropy_falls_back_to_seeded_order_on_uniform_model():
    pool = pool_fixture()
    model = uniform_model(2, 4)
    picked = select_entropy(pool, model, 6, rng_from(9))
    ids = np.array([s.id for s in sorted(pool, key=lambda s: s.id)])
    expected = ids[rng_from(9).permutation(len(ids))][:6].tolist()
    assert picked == expected


def test_entropy_prefers_ambiguous_predictions():
    # one-hot-ish samples are confident, the midpoint sample is not
    samples = [Sample(0, np.array([5.0, 0.0]), 0),
               Sample(1, np.array([0.0, 5.0]), 1),
               Sample(2, np.array([0.1, 0.1]), 0)]
    model = linear_model(np.eye(2))
    assert select_entropy(samples, model, 1, rng_from(0)) == [2]


def test_margin_prefers_smallest_gap():
    samples = [Sample(0, np.array([5.0, 0.0]), 0),
               Sample(1, np.array([0.3, 0.0]), 0),
               Sample(2, np.array([2.0, 0.0]), 0)]
    model = linear_model(np.array([[1.0, -1.0], [0.0, 0.0]]))
    picked = select_margin(samples, model, 3, rng_from(1))
    assert picked == [1, 2, 0]


def test_pseudoscore_matches_manual_computation():
    pool = pool_fixture(seed=3)
    model = linear_model(np.array([[0.9, -0.4], [0.2, 0.5]]))
    picked = select_pseudoscore(pool, model, 4, rng_from(2))
    from batchal.learner import predict_proba
    x = np.stack([s.features for s in sorted(pool, key=lambda s: s.id)])
    probs = predict_proba(model, x)
    onehot = np.eye(2)[probs.argmax(axis=1)]
    scores = np.linalg.norm(probs - onehot, axis=1)
    order = np.argsort(-scores)
    assert set(picked) == {sorted(pool, key=lambda s: s.id)[k].id
                           for k in order[:4]}


def test_coreset_matches_greedy_oracle_on_five_points():
    feats = np.array([[0.0, 0.0], [1.0, 0.0], [4.0, 0.0],
                      [4.5, 0.0], [10.0, 0.0]])
    pool = [Sample(i, feats[i], 0) for i in range(5)]
    labeled = [Sample(100, np.array([0.2, 0.0]), 0)]
    model = uniform_model(2, 2)  # width 0: features are the inputs
    picked = select_coreset(pool, labeled, model, 2)
    expected = kcenter_greedy_oracle(feats, [0, 1, 2, 3, 4],
                                     np.array([[0.2, 0.0]]), 2)
    # farthest point first (id 4), then id 3 whose nearest-center distance
    # (4.3 to the initial center) beats everything else
    assert picked == expected == [4, 3]


def test_coreset_matches_greedy_oracle_on_random_instance():
    rng = np.random.default_rng(7)
    pool = [Sample(i, rng.normal(size=3), 0) for i in range(20)]
    labeled = [Sample(100 + i, rng.normal(size=3), 0) for i in range(4)]
    model = uniform_model(3, 2)
    picked = select_coreset(pool, labeled, model, 6)
    expected = kcenter_greedy_oracle(
        np.stack([s.features for s in pool]), [s.id for s in pool],
        np.stack([s.features for s in labeled]), 6)
    assert picked == expected


def test_oracle_is_class_balanced():
    rng = np.random.default_rng(8)
    pool = [Sample(i, rng.normal(size=2), int(i % 2)) for i in range(20)]
    model = linear_model(rng.normal(size=(2, 2)))
    picked = select_oracle(pool, [model], 6, TrustSetConfig(),
                           SuperLossConfig())
    labels = [s.label for s in pool if s.id in set(picked)]
    assert sorted(np.bincount(labels).tolist()) == [3, 3]


def spy_pool(pool):
    counter: dict = {}
    return [SpySample(s, counter) for s in pool], counter


def test_non_oracle_strategies_never_read_pool_labels():
    pool = pool_fixture(seed=11, n=15)
    labeled = pool_fixture(seed=12, n=6)
    model = linear_model(np.array([[0.5, -0.2], [0.1, 0.4]]))

    spies, counter = spy_pool(pool)
    select_random(spies, 5, rng_from(0))
    select_entropy(spies, model, 5, rng_from(0))
    select_margin(spies, model, 5, rng_from(0))
    select_pseudoscore(spies, model, 5, rng_from(0))
    select_coreset(spies, labeled, model, 5)
    assert counter == {}

    net = init_reward_net(12, 8, seed=1)
    select_batch(net, labeled, spies, model, 5,
                 ClusterConfig(labeled_k=2, unlabeled_k=2), seed=2)
    assert counter == {}


def test_oracle_reads_pool_labels():
    pool = pool_fixture(seed=13, n=10)  # labels span three classes
    spies, counter = spy_pool(pool)
    model = linear_model(np.array([[0.5, -0.2, 0.1], [0.1, 0.4, -0.3]]))
    select_oracle(spies, [model], 4, TrustSetConfig(), SuperLossConfig())
    assert sum(counter.values()) > 0
