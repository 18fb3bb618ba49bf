import math

import numpy as np
import pytest

from batchal.dataset import Sample, gen_gaussian_mixture, init_split
from batchal.learner import (ModelParams, TrainConfig, accuracy, cross_entropy,
                             features, gradients, init_params, load_params,
                             predict_proba, save_params, total_loss,
                             train_from_scratch, train_with_history)
from batchal.superloss import SuperLossConfig
from batchal.util import NumericError


def make_samples(x, y):
    return [Sample(i, np.asarray(xi, dtype=float), int(yi))
            for i, (xi, yi) in enumerate(zip(x, y))]


def test_separable_blobs_reach_high_accuracy():
    data = gen_gaussian_mixture(2, 2, 60, 10.0, 3)
    split = init_split(data, 96, 0.2, 0)
    cfg = TrainConfig(hidden=8, epochs=50, batch_size=16, learning_rate=0.2,
                      seed=0)
    params = train_from_scratch(split.labeled(), cfg, num_classes=2)
    assert accuracy(params, split.test()) >= 0.99


def test_zero_epochs_is_rejected():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)


def test_training_is_deterministic():
    data = gen_gaussian_mixture(3, 4, 20, 4.0, 5)
    samples = [data.samples[i] for i in data.ids]
    cfg = TrainConfig(hidden=6, epochs=10, batch_size=8, learning_rate=0.1,
                      momentum=0.5, weight_decay=1e-3, seed=9)
    a = train_from_scratch(samples, cfg)
    b = train_from_scratch(samples, cfg)
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_zero_weights_give_uniform_probabilities():
    params = ModelParams(np.zeros((4, 0)), np.zeros(0),
                         np.zeros((4, 5)), np.zeros(5))
    p = predict_proba(params, np.ones(4))
    assert np.allclose(p, 0.2, atol=1e-15)


def test_large_logit_saturates_softmax():
    params = ModelParams(np.zeros((2, 0)), np.zeros(0),
                         np.zeros((2, 3)), np.array([500.0, 0.0, 0.0]))
    p = predict_proba(params, np.zeros(2))
    assert p[0] == pytest.approx(1.0, abs=1e-12)


def test_probabilities_normalize():
    rng = np.random.default_rng(0)
    params = init_params(5, 7, 4, seed=2)
    x = rng.normal(size=(40, 5)) * 10
    probs = predict_proba(params, x)
    assert np.all(probs > 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_cross_entropy_values():
    assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0
    c = 7
    assert cross_entropy(np.full(c, 1 / c), 3) == pytest.approx(math.log(c))
    # frozen: -log(0.3)
    assert cross_entropy(np.array([0.7, 0.3]), 1) == pytest.approx(
        1.2039728043259361, abs=1e-12)
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(
        -math.log(1e-30))


def test_features_identity_without_hidden_layer():
    params = ModelParams(np.zeros((3, 0)), np.zeros(0),
                         np.ones((3, 2)), np.zeros(2))
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(features(params, x), x)


def test_features_are_post_relu():
    params = init_params(3, 6, 2, seed=1)
    f = features(params, np.random.default_rng(1).normal(size=(10, 3)))
    assert f.shape == (10, 6)
    assert np.all(f >= 0.0)


def test_accuracy_counts_matches_manual_fixture():
    params = ModelParams(np.zeros((2, 0)), np.zeros(0),
                         np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    samples = make_samples([[3, 0], [0, 3], [3, 0], [0, 3]], [0, 1, 1, 1])
    # predictions: 0, 1, 0, 1 -> correct for samples 0, 1, 3
    assert accuracy(params, samples) == pytest.approx(3 / 4)
    assert accuracy(params, samples[:1]) == 1.0
    with pytest.raises(ValueError, match="empty"):
        accuracy(params, [])


def test_argmax_ties_take_lowest_class():
    params = ModelParams(np.zeros((2, 0)), np.zeros(0),
                         np.zeros((2, 3)), np.zeros(3))
    samples = make_samples([[1, 1]], [0])
    assert accuracy(params, samples) == 1.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(123)
    failures = 0
    for trial in range(50):
        d = int(rng.integers(2, 5))
        h = int(rng.integers(0, 6))
        c = int(rng.integers(2, 4))
        n = int(rng.integers(2, 7))
        wd = float(rng.choice([0.0, 1e-2]))
        params = init_params(d, h, c, seed=trial)
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        grads, _ = gradients(params, x, y, weight_decay=wd)
        for name in ("w1", "b1", "w2", "b2"):
            theta = getattr(params, name)
            if theta.size == 0:
                continue
            analytic = getattr(grads, name)
            fd = np.zeros_like(theta)
            it = np.nditer(theta, flags=["multi_index"])
            step = 1e-5
            while not it.finished:
                idx = it.multi_index
                orig = theta[idx]
                theta[idx] = orig + step
                up = total_loss(params, x, y, wd)
                theta[idx] = orig - step
                down = total_loss(params, x, y, wd)
                theta[idx] = orig
                fd[idx] = (up - down) / (2 * step)
                it.iternext()
            rel = (np.linalg.norm(analytic - fd)
                   / max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-8))
            if rel > 1e-4:
                failures += 1
    assert failures == 0


def test_vanishing_learning_rate_freezes_parameters():
    data = gen_gaussian_mixture(2, 3, 10, 3.0, 1)
    samples = [data.samples[i] for i in data.ids]
    cfg = TrainConfig(hidden=4, epochs=1, batch_size=5, learning_rate=1e-300,
                      seed=4)
    trained = train_from_scratch(samples, cfg)
    fresh = init_params(3, 4, 2, seed=4)
    for name in ("w1", "b1", "w2", "b2"):
        assert np.allclose(getattr(trained, name), getattr(fresh, name),
                           atol=1e-12)


def test_loss_nonincreasing_after_first_epoch_in_most_trials():
    data = gen_gaussian_mixture(2, 3, 15, 3.0, 2)
    samples = [data.samples[i] for i in data.ids]
    good = 0
    trials = 20
    for seed in range(trials):
        cfg = TrainConfig(hidden=5, epochs=8, batch_size=6, learning_rate=0.01,
                          momentum=0.0, seed=seed)
        _, history = train_with_history(samples, cfg)
        if all(later <= earlier + 1e-12
               for earlier, later in zip(history[1:], history[2:])):
            good += 1
    assert good >= 0.9 * trials


def test_superloss_training_mode_runs_and_is_deterministic():
    data = gen_gaussian_mixture(2, 3, 12, 4.0, 8)
    samples = [data.samples[i] for i in data.ids]
    cfg = TrainConfig(hidden=4, epochs=5, batch_size=6, learning_rate=0.05,
                      seed=3, loss_mode="superloss",
                      superloss=SuperLossConfig(tau=5.0, lam=2.0))
    a = train_from_scratch(samples, cfg)
    b = train_from_scratch(samples, cfg)
    assert np.array_equal(a.w2, b.w2)
    assert np.all(np.isfinite(a.w2))


def test_divergence_reports_epoch_and_batch():
    data = gen_gaussian_mixture(2, 3, 12, 4.0, 8)
    samples = [data.samples[i] for i in data.ids]
    cfg = TrainConfig(hidden=4, epochs=30, batch_size=4, learning_rate=1e18,
                      seed=3)
    with pytest.raises(NumericError, match=r"epoch \d+, batch \d+"):
        train_from_scratch(samples, cfg)


def test_empty_labeled_set_rejected():
    with pytest.raises(ValueError, match="empty"):
        train_from_scratch([], TrainConfig())


def test_label_outside_declared_range_rejected():
    samples = make_samples([[0.0, 1.0]], [3])
    with pytest.raises(ValueError, match="class range"):
        train_from_scratch(samples, TrainConfig(), num_classes=2)


def test_dimension_mismatch_rejected():
    params = init_params(4, 3, 2, seed=0)
    with pytest.raises(ValueError, match="dimension"):
        predict_proba(params, np.zeros(5))


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(4, 3, 2, seed=7)
    path = tmp_path / "model.npz"
    save_params(params, path)
    loaded = load_params(path)
    for name in ("w1", "b1", "w2", "b2"):
        assert np.array_equal(getattr(params, name), getattr(loaded, name))
