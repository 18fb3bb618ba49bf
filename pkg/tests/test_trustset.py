import math

import numpy as np
import pytest

from batchal.dataset import Sample
from batchal.learner import ModelParams
from batchal.superloss import SuperLossConfig, superloss_sigma
from batchal.trustset import (TrustSet, TrustSetConfig, cl_score, cl_scores,
                              el2n_score, el2n_scores, export_trustset_csv,
                              extract_trustset, second_best_trustset)


def probs_model(probs):
    """A width-0 model whose softmax output equals `probs` for zero input."""
    probs = np.asarray(probs, dtype=float)
    dim = 2
    return ModelParams(np.zeros((dim, 0)), np.zeros(0),
                       np.zeros((dim, len(probs))), np.log(probs))


def zero_sample(sid=0, label=0, dim=2):
    return Sample(sid, np.zeros(dim), label)


def test_el2n_perfect_prediction_is_zero():
    model = probs_model([1 - 1e-15, 1e-15])
    assert el2n_score([model], zero_sample(label=0)) == pytest.approx(0.0, abs=1e-7)


def test_el2n_uniform_prediction():
    c = 10
    model = probs_model(np.full(c, 1.0 / c))
    # frozen: sqrt((c-1)/c) = sqrt(0.9)
    assert el2n_score([model], zero_sample(label=3)) == pytest.approx(
        0.9486832980505138, abs=1e-12)


def test_el2n_direct_evaluation():
    model = probs_model([0.2, 0.5, 0.3])
    # frozen: sqrt(0.8^2 + 0.5^2 + 0.3^2) = sqrt(0.98)
    assert el2n_score([model], zero_sample(label=0)) == pytest.approx(
        0.9899494936611665, abs=1e-12)


def test_el2n_range_and_ensemble_mean():
    rng = np.random.default_rng(0)
    for _ in range(50):
        probs = rng.dirichlet(np.ones(4))
        score = el2n_score([probs_model(probs)], zero_sample(label=0))
        assert 0.0 <= score <= math.sqrt(2.0) + 1e-12
    m1 = probs_model([0.9, 0.1])
    m2 = probs_model([0.5, 0.5])
    single1 = el2n_score([m1], zero_sample(label=0))
    single2 = el2n_score([m2], zero_sample(label=0))
    both = el2n_score([m1, m2], zero_sample(label=0))
    assert both == pytest.approx((single1 + single2) / 2)


def test_cl_score_without_curriculum_equals_el2n():
    model = probs_model([0.3, 0.7])
    cfg = TrustSetConfig(use_curriculum=False)
    s = zero_sample(label=1)
    assert cl_score([model], s, cfg, SuperLossConfig()) == pytest.approx(
        el2n_score([model], s))


def test_cl_score_at_threshold_equals_el2n():
    model = probs_model([0.3, 0.7])
    s = zero_sample(label=1)
    loss = -math.log(0.7)
    sl = SuperLossConfig(tau=loss, lam=1.0)
    assert cl_score([model], s, TrustSetConfig(), sl) == pytest.approx(
        el2n_score([model], s), rel=1e-9)


def test_easier_sample_outscores_harder_at_equal_el2n():
    # two 3-class predictions with identical el2n but different confidence:
    # solve r^2 + (0.38 - r)^2 = 0.26 - 0.38^2 for the easy prediction
    r = (0.38 - math.sqrt(0.0868)) / 2
    p_hard = [0.6, 0.1, 0.3]
    p_easy = [0.62, r, 0.38 - r]
    e_hard = el2n_score([probs_model(p_hard)], zero_sample(label=0))
    e_easy = el2n_score([probs_model(p_easy)], zero_sample(label=0))
    assert e_hard == pytest.approx(e_easy, abs=1e-9)
    tau = 0.5  # between -log(0.62) and -log(0.6)
    sl = SuperLossConfig(tau=tau, lam=1.0)
    cfg = TrustSetConfig()
    hard = cl_score([probs_model(p_hard)], zero_sample(label=0), cfg, sl)
    easy = cl_score([probs_model(p_easy)], zero_sample(label=0), cfg, sl)
    assert easy > hard
    # sigma ordering is what drives it
    assert superloss_sigma(-math.log(0.62), sl) > superloss_sigma(
        -math.log(0.6), sl)


def make_classified_samples(rng, counts, dim=3):
    """Samples with random features, labels laid out per class counts."""
    samples = []
    sid = 0
    for label, count in enumerate(counts):
        for _ in range(count):
            samples.append(Sample(sid, rng.normal(size=dim), label))
            sid += 1
    return samples


def trained_toy_model(samples, num_classes, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    return ModelParams(rng.normal(size=(dim, 4)) * 0.5, rng.normal(size=4) * 0.1,
                       rng.normal(size=(4, num_classes)) * 0.5,
                       rng.normal(size=num_classes) * 0.1)


def brute_force_selection(samples, scores, size, num_classes):
    """Literal re-derivation: per-class quota, then score-greedy refill."""
    base, extra = divmod(size, num_classes)
    quotas = [base + (1 if c < extra else 0) for c in range(num_classes)]
    by_class = {c: sorted([s for s in samples if s.label == c],
                          key=lambda s: (-scores[s.id], s.id))
                for c in range(num_classes)}
    picked = []
    for c in range(num_classes):
        picked.extend(by_class[c][: quotas[c]])
    leftovers = sorted((s for s in samples if s not in picked),
                       key=lambda s: (-scores[s.id], s.id))
    picked.extend(leftovers[: size - len(picked)])
    return {s.id for s in picked}


def test_full_selection_returns_everything():
    rng = np.random.default_rng(1)
    samples = make_classified_samples(rng, [4, 4])
    model = trained_toy_model(samples, 2)
    ts = extract_trustset(samples, [model], TrustSetConfig(size=8),
                          SuperLossConfig())
    assert sorted(ts.ids) == [s.id for s in samples]


def test_balanced_selection_matches_brute_force():
    rng = np.random.default_rng(2)
    samples = make_classified_samples(rng, [5, 5])
    model = trained_toy_model(samples, 2)
    cfg = TrustSetConfig(size=4)
    sl = SuperLossConfig()
    ts = extract_trustset(samples, [model], cfg, sl)
    x = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples])
    scores = dict(zip([s.id for s in samples],
                      cl_scores([model], x, y, cfg, sl)))
    assert set(ts.ids) == brute_force_selection(samples, scores, 4, 2)
    assert ts.per_class_counts.tolist() == [2, 2]


def test_deficit_redistribution_matches_brute_force():
    rng = np.random.default_rng(3)
    counts = [6, 6, 6, 6, 6, 6, 6, 6, 6, 1]  # class 9 is starved
    samples = make_classified_samples(rng, counts)
    model = trained_toy_model(samples, 10)
    cfg = TrustSetConfig(size=20)
    sl = SuperLossConfig()
    ts = extract_trustset(samples, [model], cfg, sl)
    x = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples])
    scores = dict(zip([s.id for s in samples],
                      cl_scores([model], x, y, cfg, sl)))
    assert set(ts.ids) == brute_force_selection(samples, scores, 20, 10)
    assert ts.per_class_counts[9] == 1
    assert ts.per_class_counts.sum() == 20


def test_quota_balance_invariant():
    rng = np.random.default_rng(4)
    for size in (10, 17, 23, 30):
        samples = make_classified_samples(rng, [8, 8, 8, 8, 8])
        model = trained_toy_model(samples, 5, seed=size)
        ts = extract_trustset(samples, [model], TrustSetConfig(size=size),
                              SuperLossConfig())
        counts = ts.per_class_counts
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == size


def test_selection_tracks_id_relabeling():
    rng = np.random.default_rng(5)
    samples = make_classified_samples(rng, [4, 4, 4])
    model = trained_toy_model(samples, 3)
    cfg = TrustSetConfig(size=6)
    sl = SuperLossConfig()
    base = extract_trustset(samples, [model], cfg, sl)
    offset = 100
    moved = [Sample(s.id + offset, s.features, s.label) for s in samples]
    shifted = extract_trustset(moved, [model], cfg, sl)
    assert sorted(i + offset for i in base.ids) == sorted(shifted.ids)


def test_adaptive_default_size_is_half_the_labeled_set():
    rng = np.random.default_rng(6)
    samples = make_classified_samples(rng, [5, 6])
    model = trained_toy_model(samples, 2)
    ts = extract_trustset(samples, [model], TrustSetConfig(), SuperLossConfig())
    assert len(ts.ids) == math.ceil(11 / 2)


def test_config_validation():
    with pytest.raises(ValueError, match="size"):
        TrustSetConfig(size=0)
    with pytest.raises(ValueError, match="ensemble"):
        TrustSetConfig(ensemble_size=0)
    with pytest.raises(ValueError, match="empty"):
        extract_trustset([], [trained_toy_model([], 2)], TrustSetConfig(),
                         SuperLossConfig())


def test_second_best_takes_the_next_quota():
    rng = np.random.default_rng(7)
    samples = make_classified_samples(rng, [4, 4])  # exactly 2x quota of 2
    model = trained_toy_model(samples, 2)
    cfg = TrustSetConfig(size=4)
    sl = SuperLossConfig()
    best = extract_trustset(samples, [model], cfg, sl)
    second = second_best_trustset(samples, [model], cfg, sl)
    assert not set(best.ids) & set(second.ids)
    assert set(best.ids) | set(second.ids) == {s.id for s in samples}


def test_second_best_disjointness_on_random_fixtures():
    rng = np.random.default_rng(8)
    for trial in range(5):
        samples = make_classified_samples(rng, [7, 9, 8])
        model = trained_toy_model(samples, 3, seed=trial)
        cfg = TrustSetConfig(size=9)  # quota 3, all classes have >= 6
        sl = SuperLossConfig()
        best = extract_trustset(samples, [model], cfg, sl)
        second = second_best_trustset(samples, [model], cfg, sl)
        assert not set(best.ids) & set(second.ids)


def test_second_best_skips_small_classes():
    rng = np.random.default_rng(9)
    samples = make_classified_samples(rng, [2, 8])  # class 0 has <= quota
    model = trained_toy_model(samples, 2)
    cfg = TrustSetConfig(size=4)
    sl = SuperLossConfig()
    second = second_best_trustset(samples, [model], cfg, sl)
    class0 = [i for i in second.ids if i < 2]
    # both class-0 samples are in the skipped top group, so only refills from
    # class 1 may appear
    assert not class0


def test_export_csv(tmp_path):
    rng = np.random.default_rng(10)
    samples = make_classified_samples(rng, [3, 3])
    model = trained_toy_model(samples, 2)
    ts = extract_trustset(samples, [model], TrustSetConfig(size=4),
                          SuperLossConfig())
    path = tmp_path / "trust.csv"
    export_trustset_csv(ts, {s.id: s.label for s in samples}, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "id,class,score,rank"
    assert len(lines) == 5
