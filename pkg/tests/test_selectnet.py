import math

import numpy as np
import pytest

from conftest import probe_classifier
from selectnet_lab.data import LabeledDataset, UnlabeledPool, generate_gaussian_blobs
from selectnet_lab.errors import ConfigError
from selectnet_lab.nn import DenseLayer, MlpModel, SgdConfig, init_mlp
from selectnet_lab.selectnet import (
    CandidateSet,
    SelectNetConfig,
    build_candidates,
    init_selector,
    run_selectnet,
    selector_objective,
    selector_scores,
    threshold_select,
    train_selector,
)
from selectnet_lab.strategies import LABELED, UNLABELED


def constant_selector(score, m=3):
    logit = math.log(score / (1 - score))
    return MlpModel([DenseLayer(np.zeros((1, m + 1)), [logit], "sigmoid")])


def candidates_from(losses, m=3, labeled=None):
    n = len(losses)
    probs = np.full((n, m), 1.0 / m)
    src = np.zeros(n, dtype=bool) if labeled is None else np.asarray(labeled)
    pred = np.zeros(n, dtype=np.int64)
    return CandidateSet(src, np.arange(n), pred, pred, probs, np.asarray(losses, dtype=float))


def test_defaults():
    cfg = SelectNetConfig()
    assert (cfg.lam, cfg.beta, cfg.round_epochs, cfg.rounds) == (0.6, 0.6, 10, 20)
    sel = init_selector(10, 0)
    assert [l.out_dim for l in sel.layers] == [8, 4, 1]
    assert [l.activation for l in sel.layers] == ["relu", "relu", "sigmoid"]


def test_config_errors():
    with pytest.raises(ConfigError):
        SelectNetConfig(beta=1.0)
    with pytest.raises(ConfigError):
        SelectNetConfig(lam=0.0)
    with pytest.raises(ConfigError):
        SelectNetConfig(selector_lr=0.0)


def test_no_candidates_when_everything_is_major():
    clf = MlpModel([DenseLayer(np.zeros((3, 2)), [0.0, 10.0, 0.0], "softmax")])
    labeled = LabeledDataset(np.ones((5, 2)), [0, 1, 2, 1, 0], 3)
    pool = UnlabeledPool(np.ones((4, 2)), np.zeros(4))
    assert len(build_candidates(clf, labeled, pool, {0, 2})) == 0


def test_candidate_features_have_m_plus_one_entries():
    clf = init_mlp((4, 10), seed=0)
    rng = np.random.default_rng(0)
    labeled = LabeledDataset(rng.normal(size=(50, 4)), rng.integers(10, size=50), 10)
    pool = UnlabeledPool(rng.normal(size=(50, 4)), np.zeros(50))
    cands = build_candidates(clf, labeled, pool, set(range(10)))
    assert cands.features.shape == (100, 11)
    np.testing.assert_allclose(cands.probs.sum(axis=1), 1.0, atol=1e-6)


def test_candidate_losses_and_categories():
    clf = probe_classifier(3)
    rows = np.log([[0.1, 0.2, 0.7], [0.1, 0.2, 0.7], [0.6, 0.3, 0.1], [0.2, 0.1, 0.7]])
    labeled = LabeledDataset(rows[:3], [1, 2, 0], 3)  # row 0 is a major predicted minor
    pool = UnlabeledPool(rows[3:], [0])
    cands = build_candidates(clf, labeled, pool, {2})
    assert cands.source.tolist() == [True, True, False]
    assert cands.index.tolist() == [0, 1, 0]
    # labeled candidates use their true label, pool candidates the prediction
    np.testing.assert_allclose(cands.losses, [-math.log(0.2), -math.log(0.7), -math.log(0.7)])
    cats = cands.categories(labeled.labels, [0])
    assert cats == {"labeled_confused": 1, "labeled_minor": 1, "unlabeled_confused": 1, "unlabeled_minor": 0}


@pytest.mark.parametrize("loss, direction", [(0.0, 1), (5.0, -1)])
def test_single_candidate_score_moves_with_sign(loss, direction):
    cands = candidates_from([loss])
    sel = init_selector(3, 0)
    before = selector_scores(sel, cands)[0]
    train_selector(sel, cands, 0.6, steps=50, lr=0.05, seed=0)
    after = selector_scores(sel, cands)[0]
    assert direction * (after - before) > 0


def test_mixed_candidates_separate_after_training():
    rng = np.random.default_rng(3)
    losses = rng.choice([0.05, 0.3, 1.2, 3.0], size=300)
    probs = rng.dirichlet(np.ones(5), size=300)
    cands = CandidateSet(np.zeros(300, bool), np.arange(300), probs.argmax(1), probs.argmax(1), probs, losses)
    sel = init_selector(5, 1)
    before = selector_objective(sel, cands, 0.6)
    train_selector(sel, cands, 0.6, steps=500, lr=0.05, seed=1)
    scores = selector_scores(sel, cands)
    assert scores[losses < 0.6].mean() > scores[losses > 0.6].mean()
    assert selector_objective(sel, cands, 0.6) < before


def test_minibatch_selector_training_is_seeded():
    cands = candidates_from(np.linspace(0, 2, 40))
    a, b = init_selector(3, 0), init_selector(3, 0)
    train_selector(a, cands, 0.6, 30, 0.05, seed=5, batch_size=8)
    train_selector(b, cands, 0.6, 30, 0.05, seed=5, batch_size=8)
    for x, y in zip(a.parameters(), b.parameters()):
        assert x.tobytes() == y.tobytes()


def test_empty_candidates_are_a_no_op():
    sel = init_selector(3, 0)
    before = [p.copy() for p in sel.parameters()]
    train_selector(sel, candidates_from([]), 0.6, 10, 0.05, 0)
    assert all(np.array_equal(a, b) for a, b in zip(before, sel.parameters()))
    assert selector_objective(sel, candidates_from([]), 0.6) == 0.0


def test_threshold_rule():
    cands = candidates_from([0.1, 0.2], labeled=[True, False])
    picked = threshold_select(constant_selector(0.7), cands, 0.6)
    assert [(d.source, d.index, d.weight) for d in picked] == [(LABELED, 0, 1.0), (UNLABELED, 1, 1.0)]
    sel = constant_selector(0.6)
    exact = float(selector_scores(sel, cands)[0])
    assert threshold_select(sel, cands, exact) == []
    assert threshold_select(constant_selector(0.999999), cands, 1.0) == []


def test_threshold_consistency_margin():
    """After long training, low-loss candidates pass and high-loss ones fail outside some margin."""
    losses = np.linspace(0.0, 2.0, 201)
    cands = candidates_from(losses)
    sel = init_selector(3, 2)
    train_selector(sel, cands, 0.6, steps=3000, lr=0.05, seed=2)
    admitted = selector_scores(sel, cands) > 0.6
    wrong = np.abs(losses[admitted != (losses < 0.6)] - 0.6)
    margin = float(wrong.max()) if wrong.size else 0.0
    print(f"empirical margin around lambda: {margin:.3f}")
    assert margin < 0.6


def small_split(seed=0, pool_size=None):
    src = generate_gaussian_blobs(3, 80, 4, 2.5, seed)
    labels = src.labels
    lab_idx = np.concatenate([np.flatnonzero(labels == 0)[:4], np.flatnonzero(labels != 0)[:120]])
    pool_idx = np.setdiff1d(np.arange(len(src)), lab_idx)[:pool_size]
    return src.subset(lab_idx), UnlabeledPool(src.features[pool_idx], labels[pool_idx])


def test_run_selectnet_decisions_follow_label_discipline():
    labeled, pool = small_split()
    cfg = SelectNetConfig(round_epochs=2, rounds=4, init_epochs=2, selector_steps=50)
    clf = init_mlp((4, 16, 3), 0)
    _, results = run_selectnet(labeled, pool, {0}, clf, SgdConfig(0.05), cfg, seed=0)
    assert len(results) == 4
    assert [r.epoch for r in results] == [4, 6, 8, 10]
    assert any(r.decisions for r in results)
    for r in results:
        assert r.info["candidates"] >= len(r.decisions)
        for d in r.decisions:
            assert d.predicted_label == 0
            if d.source == LABELED:
                assert d.assigned_label == labeled.labels[d.index]
            else:
                assert d.assigned_label == d.predicted_label


def test_run_selectnet_with_empty_pool_and_balanced_data():
    src = generate_gaussian_blobs(3, 30, 4, 3.0, 0)
    pool = UnlabeledPool(np.empty((0, 4)), np.empty(0))
    cfg = SelectNetConfig(round_epochs=1, rounds=2, init_epochs=1, selector_steps=10)
    _, results = run_selectnet(src, pool, {0}, init_mlp((4, 8, 3), 0), SgdConfig(), cfg, 0)
    assert all(d.source == LABELED for r in results for d in r.decisions)


def test_run_selectnet_is_reproducible():
    labeled, pool = small_split(1)
    cfg = SelectNetConfig(round_epochs=2, rounds=3, init_epochs=2, selector_steps=40)

    def go():
        clf, results = run_selectnet(labeled, pool, {0}, init_mlp((4, 8, 3), 3), SgdConfig(), cfg, 3)
        return clf, [r.decisions for r in results]

    (a, da), (b, db) = go(), go()
    assert da == db
    for x, y in zip(a.parameters(), b.parameters()):
        assert x.tobytes() == y.tobytes()


def test_run_selectnet_rejects_mismatched_classifier_before_training():
    labeled, pool = small_split()
    clf = init_mlp((4, 8, 5), 0)
    before = [p.copy() for p in clf.parameters()]
    with pytest.raises(ConfigError):
        run_selectnet(labeled, pool, {0}, clf, SgdConfig(), SelectNetConfig(rounds=1))
    assert all(np.array_equal(a, b) for a, b in zip(before, clf.parameters()))


def test_reinit_selector_flag():
    labeled, pool = small_split()
    cfg = SelectNetConfig(round_epochs=1, rounds=2, init_epochs=1, selector_steps=5, reinit_selector=True)
    _, results = run_selectnet(labeled, pool, {0}, init_mlp((4, 8, 3), 0), SgdConfig(), cfg, 0)
    assert len(results) == 2
