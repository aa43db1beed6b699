import math

import numpy as np
import pytest

from tntgraph.cart import CartConfig
from tntgraph.dataset import Dataset, bootstrap_sample
from tntgraph.ensemble import (
    AdaBoostModel,
    BaggingModel,
    c_range_for,
    ensemble_from_json,
    ensemble_to_json,
    fit_adaboost,
    fit_bagging,
    fit_learner,
    predict_adaboost,
    predict_bagging,
    samme_alpha,
    sweep_c,
    tune_c_for_budget,
)
from tntgraph.graph import single_leaf, split_count, to_json
from tntgraph.tnt import TnTConfig
from util import random_dataset, samme_oracle, three_class_fixture

STUMP = CartConfig(mode="best_first", max_splits=1)


def test_bagging_single_estimator():
    ds = random_dataset(np.random.default_rng(0), 100, 3, 3)
    model = fit_bagging(ds, 1, TnTConfig(C=5e-3), seed=7)
    ref = fit_learner(bootstrap_sample(ds, 7), TnTConfig(C=5e-3, seed=7))
    assert to_json(model.estimators[0]) == to_json(ref)
    plain = fit_bagging(ds, 1, TnTConfig(C=5e-3), seed=0, bootstrap=False)
    assert to_json(plain.estimators[0]) == to_json(fit_learner(ds, TnTConfig(C=5e-3)))


def test_bagging_identical_samples():
    ds = Dataset(np.ones((20, 2)), [1] * 20, 2)
    model = fit_bagging(ds, 4, TnTConfig())
    assert all(split_count(e) == 0 for e in model.estimators)
    assert model.n_splits == 0


def test_vote_rules():
    a, b, c = single_leaf(0, 1, 3), single_leaf(2, 1, 3), single_leaf(1, 1, 3)
    x = np.zeros((1, 1))
    assert predict_bagging(BaggingModel((b, b, b), (0, 1, 2)), x)[0] == 2
    assert predict_bagging(BaggingModel((b, b, a), (0, 1, 2)), x)[0] == 2
    assert predict_bagging(BaggingModel((b, a), (0, 1)), x)[0] == 0
    assert predict_adaboost(AdaBoostModel((c,), (0.3,)), x)[0] == 1
    assert predict_adaboost(AdaBoostModel((b, a), (0.5, 0.5)), x)[0] == 0
    assert predict_adaboost(AdaBoostModel((b, a), (0.6, 0.5)), x)[0] == 2


def test_adaboost_perfect_first_stage():
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    ds = Dataset(X, [0, 0, 1, 1], 2)
    model = fit_adaboost(ds, 5, STUMP)
    assert len(model.estimators) == 1
    assert (model.predict(X) == ds.labels).all()
    assert model.alphas[0] == pytest.approx(math.log(1e12))


def test_adaboost_binary_alpha_is_classic():
    assert samme_alpha(0.25, 2) == pytest.approx(math.log(3))
    assert samme_alpha(0.25, 3) == pytest.approx(math.log(3) + math.log(2))
    assert samme_alpha(0.25, 3, 0.5) == pytest.approx(0.5 * (math.log(3) + math.log(2)))


def test_samme_trace_matches_oracle():
    ds = three_class_fixture()
    model = fit_adaboost(ds, 5, STUMP)
    oracle = samme_oracle(ds, 5, lambda d, s: fit_learner(d, CartConfig(mode="best_first", max_splits=1, seed=s)))
    kept = [s for s in model.trace if s.alpha is not None]
    assert len(kept) == len(oracle) == len(model.estimators)
    for stage, (w, err, alpha) in zip(kept, oracle):
        np.testing.assert_allclose(stage.weights, w, rtol=0, atol=1e-9)
        assert stage.error == pytest.approx(err, abs=1e-9)
        assert stage.alpha == pytest.approx(alpha, abs=1e-9)


def test_adaboost_weight_invariants():
    ds = three_class_fixture(seed=3)
    model = fit_adaboost(ds, 8, STUMP)
    for stage in model.trace:
        assert (stage.weights >= 0).all()
        assert stage.weights.sum() == pytest.approx(1.0, abs=1e-9)
        if stage.alpha is not None:
            assert stage.error < 1 - 1 / ds.n_classes


def test_adaboost_discards_chance_learner():
    X = np.zeros((30, 1))
    ds = Dataset(X, np.arange(30) % 3, 3)
    with pytest.raises(RuntimeError):
        fit_adaboost(ds, 3, STUMP)


def test_adaboost_with_tnt_base():
    ds = three_class_fixture(seed=4, m=300)
    model = fit_adaboost(ds, 3, TnTConfig(C=1e-2))
    assert 1 <= len(model.estimators) <= 3
    assert all(math.isfinite(a) for a in model.alphas)


def test_bagging_jobs_match_serial():
    ds = random_dataset(np.random.default_rng(2), 150, 3, 3)
    a = fit_bagging(ds, 3, TnTConfig(C=5e-3), seed=1)
    b = fit_bagging(ds, 3, TnTConfig(C=5e-3), seed=1, n_jobs=2)
    assert [to_json(e) for e in a.estimators] == [to_json(e) for e in b.estimators]


def test_tuner():
    ds = random_dataset(np.random.default_rng(6), 300, 3, 3)
    grid, counts = sweep_c(ds, TnTConfig(), (1e-3, 10.0), 8)
    C, splits = tune_c_for_budget(ds, 0, TnTConfig(), (1e-3, 10.0), 8)
    assert splits == 0
    assert C == max(c for c, n in zip(grid, counts) if n == 0)
    target = counts[3]
    C, splits = tune_c_for_budget(ds, target, TnTConfig(), (1e-3, 10.0), 8)
    assert splits == target
    with pytest.raises(ValueError):
        sweep_c(ds, TnTConfig(), (1.0, 0.1))


def test_c_ranges():
    assert c_range_for("pendigits") == (5e-4, 1e-1)
    assert c_range_for("Pendigits.t") == (5e-4, 1e-1)
    assert c_range_for("optdigits") == (3e-4, 6e-2)
    assert c_range_for("connect4") == (6e-5, 1e-2)
    assert c_range_for("unknown") == (1e-4, 1e-1)


def test_ensemble_json_round_trip():
    ds = three_class_fixture()
    ada = fit_adaboost(ds, 3, STUMP)
    back = ensemble_from_json(ensemble_to_json(ada))
    assert back.alphas == ada.alphas
    np.testing.assert_array_equal(back.predict(ds.features), ada.predict(ds.features))
    bag = fit_bagging(ds, 2, STUMP)
    back = ensemble_from_json(ensemble_to_json(bag))
    assert isinstance(back, BaggingModel) and back.seeds == bag.seeds
    np.testing.assert_array_equal(back.predict(ds.features), bag.predict(ds.features))
