import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tntgraph.cart import ccp_prune, fit_cart, fit_pruned
from tntgraph.dataset import Dataset, make_corners_synthetic
from tntgraph.graph import (
    DecisionGraph,
    breadth_first_order,
    infer_from,
    leaf_count,
    routing_table,
    single_leaf,
    split_count,
    to_json,
)
from tntgraph.tnt import (
    TnTConfig,
    _leaf_tree,
    best_routing_split,
    fine_tune,
    fit_tnt,
    grow_round,
    merge_phase,
    regularization_coeff,
    sensitive_mask,
    sensitive_subset_internal,
    sensitive_subset_leaf,
)
from util import random_dag, random_dataset


def test_regularization_coeff():
    assert regularization_coeff(1e-3, 1000, 100) == pytest.approx(1e-2)
    assert regularization_coeff(1e-3, 1000, 1000) == 1e-3
    assert regularization_coeff(0.0, 10, 3) == 0.0
    with pytest.raises(ValueError):
        regularization_coeff(1e-3, 10, 0)


def test_sensitive_mask_examples():
    mask, target = sensitive_mask(np.array([0, 1, 0]), np.zeros(3, int), np.ones(3, int))
    assert mask.all() and list(target) == [0, 1, 0]
    same = np.array([0, 1, 2])
    mask, target = sensitive_mask(np.array([0, 1, 1]), same, same)
    assert not mask.any() and target.size == 0


def diamond():
    # root x0<0.5 -> A else B ; A: x1<0.5 -> L0 else L1 ; B: x1<0.5 -> L1 else L2
    return DecisionGraph([0, 1, 1, -1, -1, -1], [0.5, 0.5, 0.5, 0, 0, 0], [1, 3, 4, -1, -1, -1],
                         [2, 4, 5, -1, -1, -1], [-1, -1, -1, 0, 1, 2], 0, 2, 3)


def test_sensitive_subset_diamond_by_hand():
    g = diamond()
    X = np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [0.9, 0.9], [0.2, 0.2]])
    y = np.array([0, 1, 2, 1, 2])
    # from A: [0,1,0,1,0]; from B: [1,2,1,2,1] per row
    #   row0 y=0: A right, B wrong -> left ; row1 y=1: A right (1), B wrong (2) -> left
    #   row2 y=2: A 0 wrong, B 1 wrong -> excluded ; row3 y=1: A 1 right, B 2 wrong -> left
    #   row4 y=2: both wrong -> excluded
    Xs, ys = sensitive_subset_internal(g, 0, X, y)
    np.testing.assert_array_equal(Xs, X[[0, 1, 3]])
    np.testing.assert_array_equal(ys, [0, 0, 0])
    y2 = np.array([1, 2, 1, 2, 0])
    Xs, ys = sensitive_subset_internal(g, 0, X, y2)
    np.testing.assert_array_equal(ys, [1, 1, 1, 1, 0])
    with pytest.raises(ValueError):
        sensitive_subset_internal(g, 3, X, y)


def test_sensitive_subset_leaf():
    g = diamond()
    Xs, ys = sensitive_subset_leaf(g, 3, np.zeros((0, 2)), np.zeros(0, int))
    assert Xs.shape == (0, 2) and ys.size == 0
    X = np.random.default_rng(0).random((4, 2))
    Xs, ys = sensitive_subset_leaf(g, 3, X, [0, 1, 1, 0])
    np.testing.assert_array_equal(Xs, X)
    np.testing.assert_array_equal(ys, [0, 1, 1, 0])


def _predict_with_flip(g, X, node, rows):
    """Predictions when the chosen rows take the opposite branch at ``node``."""
    out = np.empty(len(X), dtype=int)
    for i, x in enumerate(X):
        v = g.root
        while g.feature[v] >= 0:
            right = x[g.feature[v]] >= g.threshold[v]
            if v == node and i in rows:
                right = not right
            v = g.right[v] if right else g.left[v]
        out[i] = g.label[v]
    return out


@given(st.integers(0, 10 ** 6))
def test_sensitive_subset_flip_property(seed):
    rng = np.random.default_rng(seed)
    g = random_dag(rng, 6, 4)
    X = rng.random((60, 3))
    y = rng.integers(0, 3, 60)
    table = routing_table(g, X)
    base_ok = g.predict(X) == y
    for v in range(g.n_nodes):
        if g.feature[v] < 0 or not table[v].size:
            continue
        rows = table[v]
        mask, _ = sensitive_mask(y[rows], infer_from(g, int(g.left[v]), X[rows]),
                                 infer_from(g, int(g.right[v]), X[rows]))
        flipped_ok = _predict_with_flip(g, X, v, set(rows.tolist())) == y
        changed = base_ok[rows] != flipped_ok[rows]
        np.testing.assert_array_equal(changed, mask)


def test_grow_round_single_leaf_is_pruned_cart():
    ds = random_dataset(np.random.default_rng(1), 300, 3, 3)
    g = single_leaf(0, 3, 3)
    pending = grow_round(g, ds, TnTConfig(C=2e-3))
    assert list(pending) == [0]
    ref = ccp_prune(fit_cart(ds), 2e-3)
    np.testing.assert_array_equal(pending[0].feature, ref.feature)
    np.testing.assert_array_equal(pending[0].threshold, ref.threshold)


def test_internal_with_empty_subset_is_bypassed():
    # both children predict class 0, so no sample is sensitive at the root
    g = DecisionGraph([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [-1, 0, 0], 0, 1, 2)
    ds = Dataset(np.array([[0.1], [0.2], [0.9]]), [0, 1, 0], 2)
    pending = grow_round(g, ds, TnTConfig(C=10.0))
    assert pending[0].n_splits == 0
    merged = merge_phase(g, pending, ds)
    assert split_count(merged) == 0


def test_merge_phase_examples():
    g = DecisionGraph([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [-1, 0, 1], 0, 2, 2)
    X = np.array([[0.1, 0.1], [0.1, 0.9], [0.9, 0.1], [0.9, 0.9]])
    ds = Dataset(X, [0, 1, 1, 1], 2)
    # micro tree at the root: x1 < 0.5 -> original left child, else original right
    micro = fit_pruned(X, np.array([0, 1, 1, 1]), np.ones(4), 2, 0.0)
    m = merge_phase(g, {0: micro}, ds)
    assert split_count(m) == 2
    np.testing.assert_array_equal(m.predict(X), [0, 1, 1, 1])
    assert leaf_count(m) <= split_count(m) + 1


def test_merge_phase_shares_children():
    # 3-leaf micro tree, two leaves labelled 0 -> the original left child gets 2 parents
    X = np.array([[0.1], [0.4], [0.6], [0.9]])
    g = DecisionGraph([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [-1, 0, 1], 0, 1, 2)
    ds = Dataset(X, [0, 1, 0, 1], 2)
    micro = fit_pruned(X, np.array([0, 1, 0, 1]), np.ones(4), 2, 0.0)
    assert micro.n_splits == 3
    m = merge_phase(g, {0: micro}, ds)
    parents = m.parents()
    assert max(len(p) for p in parents) >= 2
    assert leaf_count(m) <= split_count(m) + 1
    np.testing.assert_array_equal(m.predict(X), ds.labels)


def test_leaf_relabel_and_splice():
    g = single_leaf(0, 1, 3)
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    ds = Dataset(X, [2, 2, 1, 1], 3)
    relabel = merge_phase(g, {0: _leaf_tree(2, 3, 1)}, ds)
    assert relabel.label[0] == 2
    spliced = merge_phase(g, {0: fit_pruned(X, ds.labels, np.ones(4), 3, 0.0)}, ds)
    assert split_count(spliced) == 1
    np.testing.assert_array_equal(spliced.predict(X), ds.labels)


def test_fit_tnt_reduces_to_pruned_cart():
    rng = np.random.default_rng(3)
    ds = random_dataset(rng, 400, 4, 3)
    X = rng.random((300, 4))
    for seed in range(3):
        cfg = TnTConfig(C=1e-3, N1=1, N2=1, seed=seed, tie_break="random")
        g = fit_tnt(ds, cfg)
        t = ccp_prune(fit_cart(ds, rng_seed=seed, tie_break="random"), 1e-3)
        np.testing.assert_array_equal(g.predict(X), t.predict(X))
        assert split_count(g) == t.n_splits


def test_fit_tnt_huge_c_majority_leaf():
    ds = Dataset(np.random.default_rng(0).random((50, 2)), [1] * 30 + [0] * 20, 2)
    g = fit_tnt(ds, TnTConfig(C=1e9))
    assert split_count(g) == 0 and g.label[0] == 1


def test_fit_tnt_determinism():
    ds = random_dataset(np.random.default_rng(5), 300, 3, 3)
    cfg = TnTConfig(C=2e-3, seed=4, tie_break="random")
    assert to_json(fit_tnt(ds, cfg)) == to_json(fit_tnt(ds, cfg))


def test_corners_phase_one_reuses_thresholds():
    t = (0.2, 0.8, 0.2, 0.8)
    ds = make_corners_synthetic(1000, t, seed=0)
    g1 = fit_tnt(ds, TnTConfig(C=0.0476, N1=1))
    assert split_count(g1) == 4
    inner = np.flatnonzero(g1.feature >= 0)
    assert all(min(abs(g1.threshold[v] - c) for c in t) < 0.01 for v in inner)
    # the second phase re-routes one subtree into another instead of adding splits
    g = fit_tnt(ds, TnTConfig(C=0.0476))
    assert (g.predict(ds.features) == ds.labels).all() and split_count(g) < 6
    assert max(len(p) for p in g.parents()) >= 2


def test_merge_invariants_on_random_data():
    rng = np.random.default_rng(8)
    for _ in range(10):
        ds = random_dataset(rng, 200, 3, 3)
        g = fit_tnt(ds, TnTConfig(C=float(rng.uniform(1e-3, 2e-2))))
        order = breadth_first_order(g)
        assert sorted(order) == list(range(g.n_nodes))
        assert leaf_count(g) <= split_count(g) + 1


def test_best_routing_split_keeps_incumbent_on_tie():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    target = np.array([0, 0, 1, 1])
    f, thr, err = best_routing_split(X, target, np.ones(4), np.arange(1), (0, 1.7))
    assert (f, thr, err) == (0, 1.7, 0.0)
    f, thr, err = best_routing_split(X, target, np.ones(4), np.arange(1), (0, 0.5))
    assert (f, thr, err) == (0, 1.5, 0.0)


def test_fine_tune_optimal_graph_unchanged():
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    ds = Dataset(X, [0, 0, 1, 1], 2)
    g = DecisionGraph([0, -1, -1], [0.5, 0, 0], [1, -1, -1], [2, -1, -1], [-1, 0, 1], 0, 1, 2)
    assert to_json(fine_tune(g, ds, 5)) == to_json(g)


def test_fine_tune_relabels_leaf():
    ds = Dataset(np.zeros((3, 1)), [1, 1, 0], 2)
    out = fine_tune(single_leaf(0, 1, 2), ds, 1)
    assert out.label[0] == 1


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6))
def test_fine_tune_monotone(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 150, 3, 3)
    g = fit_tnt(ds, TnTConfig(C=float(rng.uniform(2e-3, 2e-2)), N1=1))
    errors = [int((g.predict(ds.features) != ds.labels).sum())]
    fine_tune(g, ds, 3, callback=lambda v, p: errors.append(int((p != ds.labels).sum())))
    assert all(b <= a for a, b in zip(errors, errors[1:]))


def test_fine_tune_topology_fixed_without_prune():
    rng = np.random.default_rng(2)
    ds = random_dataset(rng, 200, 3, 3)
    g = fit_tnt(ds, TnTConfig(C=5e-3))
    out = fine_tune(g, ds, 5, prune=False)
    np.testing.assert_array_equal(out.left, g.left)
    np.testing.assert_array_equal(out.right, g.right)
    assert (out.predict(ds.features) == ds.labels).sum() >= (g.predict(ds.features) == ds.labels).sum()


def test_weighted_fit_runs():
    rng = np.random.default_rng(0)
    ds = random_dataset(rng, 200, 3, 3, weights=True)
    g = fit_tnt(ds, TnTConfig(C=3e-3))
    assert split_count(g) >= 1


def test_config_validation():
    with pytest.raises(ValueError):
        TnTConfig(C=-1)
    with pytest.raises(ValueError):
        TnTConfig(N1=0)
