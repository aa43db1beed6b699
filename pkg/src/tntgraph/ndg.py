"""Naive decision graph: greedy leaf splits and leaf merges.

Starting from one leaf, every iteration scores the best axis-aligned split of
each leaf (misclassification reduction minus ``C``) and every pairwise leaf
merge, then applies the single best operation.  A merge that makes an
internal node's two edges coincide also removes that split, which is credited
at ``C`` per removed split.  Merges that cost nothing are applied only when
no operation strictly improves the objective, and stop once no two leaves
can be joined for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cart import feature_priority
from .dataset import Dataset
from .graph import DecisionGraph, build_graph, routing_table, simplify, single_leaf

_TOL = 1e-12


@dataclass(frozen=True)
class NdgConfig:
    C: float = 3e-4
    max_iterations: int = 10000
    seed: int = 0
    tie_break: str = "lowest"

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("C must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class LeafSplit:
    feature: int
    threshold: float
    left_class: int
    right_class: int
    error: float   # weighted misclassification after the split


def _weights(ds: Dataset) -> np.ndarray:
    return np.ones(ds.n_samples) / ds.n_samples if ds.weights is None else ds.weights


def best_misclassification_split(X, y, w, n_classes, priority=None) -> LeafSplit | None:
    """Split minimising weighted error when each side predicts its plurality
    class.  Ties go to the higher-priority feature, then the lower threshold."""
    n, k = X.shape
    if n < 2:
        return None
    if priority is None:
        priority = np.arange(k)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = w
    total = onehot.sum(axis=0)
    best = None
    for f in np.argsort(priority, kind="stable"):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cut = np.flatnonzero(xs[1:] > xs[:-1])
        if not cut.size:
            continue
        cum = np.cumsum(onehot[order], axis=0)[cut]
        rest = total - cum
        err = (cum.sum(1) - cum.max(1)) + (rest.sum(1) - rest.max(1))
        j = int(np.argmin(err))
        if best is None or err[j] < best.error - _TOL:
            i = cut[j]
            thr = xs[i] + (xs[i + 1] - xs[i]) / 2.0
            if not xs[i] < thr <= xs[i + 1]:
                thr = xs[i + 1]
            best = LeafSplit(int(f), float(thr), int(np.argmax(cum[j])), int(np.argmax(rest[j])), float(err[j]))
    return best


def _leaf_error(y, w, n_classes) -> float:
    hist = np.bincount(y, weights=w, minlength=n_classes)
    return float(hist.sum() - hist.max())


def leaf_split_gain(g: DecisionGraph, leaf: int, ds: Dataset, C: float) -> tuple[float, LeafSplit | None]:
    """Fraction of training error removed by the leaf's best split, minus ``C``."""
    if g.feature[leaf] >= 0:
        raise ValueError(f"node {leaf} is not a leaf")
    rows = routing_table(g, ds.features)[leaf]
    w = _weights(ds)
    split = best_misclassification_split(ds.features[rows], ds.labels[rows], w[rows], ds.n_classes)
    if split is None:
        return -C, None
    before = _weights_error(g, leaf, rows, ds, w)
    return (before - split.error) / w.sum() - C, split


def _weights_error(g, leaf, rows, ds, w):
    return float(w[rows][ds.labels[rows] != g.label[leaf]].sum())


def leaf_merge_gain(g: DecisionGraph, leaf_a: int, leaf_b: int, ds: Dataset) -> float:
    """Training-accuracy change when both leaves become one leaf labelled by
    the plurality class of their joint visitors."""
    table = routing_table(g, ds.features)
    w = _weights(ds)
    rows = np.concatenate([table[leaf_a], table[leaf_b]])
    before = _weights_error(g, leaf_a, table[leaf_a], ds, w) + _weights_error(g, leaf_b, table[leaf_b], ds, w)
    after = _leaf_error(ds.labels[rows], w[rows], ds.n_classes)
    return (before - after) / w.sum()


def fit_ndg(ds: Dataset, cfg: NdgConfig = NdgConfig()) -> DecisionGraph:
    X, y, K = ds.features, ds.labels, ds.n_classes
    w = _weights(ds)
    W = w.sum()
    priority = feature_priority(ds.n_features, cfg.tie_break, cfg.seed)
    hist0 = np.bincount(y, weights=w, minlength=K)
    g = single_leaf(int(np.argmax(hist0)), ds.n_features, K)
    split_cache: dict[bytes, LeafSplit | None] = {}
    for _ in range(cfg.max_iterations):
        table = routing_table(g, X)
        leaves = [v for v in range(g.n_nodes) if g.feature[v] < 0]
        hists = np.array([np.bincount(y[table[v]], weights=w[table[v]], minlength=K) for v in leaves])
        errs = hists.sum(1) - hists[np.arange(len(leaves)), g.label[leaves]]

        best_gain, best_op = -np.inf, None
        for i, v in enumerate(leaves):
            rows = table[v]
            key = rows.tobytes()
            if key not in split_cache:
                split_cache[key] = best_misclassification_split(X[rows], y[rows], w[rows], K, priority)
            s = split_cache[key]
            if s is None:
                continue
            gain = (errs[i] - s.error) / W - cfg.C
            if gain > best_gain + _TOL:
                best_gain, best_op = gain, ("split", v, s)

        free_merge = None
        if len(leaves) > 1:
            pos = {v: i for i, v in enumerate(leaves)}
            # splits whose two edges would coincide after merging that pair
            sibling = np.zeros((len(leaves), len(leaves)))
            for u in np.flatnonzero(g.feature >= 0):
                a, b = pos.get(int(g.left[u])), pos.get(int(g.right[u]))
                if a is not None and b is not None and a != b:
                    sibling[a, b] += 1
                    sibling[b, a] += 1
            joint = hists[:, None, :] + hists[None, :, :]
            merged_err = joint.sum(2) - joint.max(2)
            gain = (errs[:, None] + errs[None, :] - merged_err) / W + cfg.C * sibling
            iu = np.triu_indices(len(leaves), 1)
            flat = gain[iu]
            j = int(np.argmax(flat))
            if flat[j] > best_gain + _TOL:
                best_gain, best_op = float(flat[j]), ("merge", leaves[iu[0][j]], leaves[iu[1][j]])
            zero = np.flatnonzero(flat >= -_TOL)
            if zero.size:
                free_merge = ("merge", leaves[iu[0][zero[0]]], leaves[iu[1][zero[0]]])

        if best_op is None or best_gain <= _TOL:
            if free_merge is None:
                break
            best_op = free_merge
        g = _apply(g, best_op, X, y, w, K)
    return g


def _apply(g: DecisionGraph, op, X, y, w, K) -> DecisionGraph:
    feature, threshold = g.feature.tolist(), g.threshold.tolist()
    left, right, label = g.left.tolist(), g.right.tolist(), g.label.tolist()
    if op[0] == "split":
        _, v, s = op
        feature[v], threshold[v], label[v] = s.feature, s.threshold, -1
        for side, cls in ((left, s.left_class), (right, s.right_class)):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            label.append(cls)
            side[v] = len(feature) - 1
        out = build_graph(feature, threshold, left, right, label, g.root, g.n_features, g.n_classes)
        return out
    _, a, b = op
    table = routing_table(g, X)
    rows = np.concatenate([table[a], table[b]])
    label[a] = int(np.argmax(np.bincount(y[rows], weights=w[rows], minlength=K)))
    left = [a if c == b else c for c in left]
    right = [a if c == b else c for c in right]
    out = build_graph(feature, threshold, left, right, label, g.root, g.n_features, g.n_classes)
    return simplify(out, X)
