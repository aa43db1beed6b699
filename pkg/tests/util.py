"""Shared fixtures builders and independent oracles for the test suite."""

import itertools
from pathlib import Path

import numpy as np

from tntgraph.cart import node_risk
from tntgraph.dataset import Dataset, load_libsvm
from tntgraph.graph import DecisionGraph, build_graph

DATA = Path(__file__).resolve().parent.parent / "data"


def load_pair(name):
    """Official train/test files; test padded to the training width."""
    train = load_libsvm(DATA / name)
    test = load_libsvm(DATA / f"{name}.t", n_features=train.n_features, label_map=train.label_map)
    return train, test


def have_data(name):
    return (DATA / name).exists() and (DATA / f"{name}.t").exists()


def corners_graph(t=(0.2, 0.8, 0.2, 0.8)):
    """Hand-built 4-split graph for the corners problem.

    x1 decides "outer column" with two splits sharing the outer/inner
    targets; x2 does the same for rows.
    """
    t1, t2, t3, t4 = t
    # 0: x1 < t1 -> outer(2) else 1 ; 1: x1 < t2 -> inner leaf(4) else outer(2)
    # 2: x2 < t3 -> corner(5) else 3 ; 3: x2 < t4 -> inner(4) else corner(5)
    feature = [0, 0, 1, 1, -1, -1]
    threshold = [t1, t2, t3, t4, 0, 0]
    left = [2, 4, 5, 4, -1, -1]
    right = [1, 2, 3, 5, -1, -1]
    label = [-1, -1, -1, -1, 0, 1]
    return DecisionGraph(feature, threshold, left, right, label, 0, 2, 2)


def random_dag(rng, n_internal, n_leaves, n_features=3, n_classes=3, grid=None):
    """Random canonical decision graph: node i only points at ids > i."""
    n = n_internal + n_leaves
    feature = list(rng.integers(0, n_features, n_internal)) + [-1] * n_leaves
    if grid is None:
        threshold = list(rng.random(n_internal)) + [0.0] * n_leaves
    else:
        threshold = list(rng.choice(grid, n_internal)) + [0.0] * n_leaves
    left, right = [-1] * n, [-1] * n
    for i in range(n_internal):
        left[i] = int(rng.integers(i + 1, n))
        right[i] = int(rng.integers(i + 1, n))
        while n - i - 1 > 1 and right[i] == left[i]:
            right[i] = int(rng.integers(i + 1, n))
    label = [-1] * n_internal + list(rng.integers(0, n_classes, n_leaves))
    return build_graph(feature, threshold, left, right, label, 0, n_features, n_classes)


def naive_infer(g, x, v=None):
    """Recursive path following, written independently of the library."""
    v = g.root if v is None else v
    if g.feature[v] < 0:
        return int(g.label[v]), [v]
    nxt = g.left[v] if x[g.feature[v]] < g.threshold[v] else g.right[v]
    cls, path = naive_infer(g, x, int(nxt))
    return cls, [v] + path


def bfs_oracle(g):
    """Level-by-level expansion; a node's level is its first appearance."""
    seen = {g.root: 0}
    frontier = [g.root]
    level = 0
    while frontier:
        level += 1
        nxt = []
        for v in frontier:
            if g.feature[v] >= 0:
                for c in (int(g.left[v]), int(g.right[v])):
                    if c not in seen:
                        seen[c] = level
                        nxt.append(c)
        frontier = nxt
    return sorted(seen, key=lambda v: (seen[v], v))


def random_dataset(rng, m, k, n_classes, integer=False, weights=False):
    X = rng.integers(0, 6, (m, k)).astype(float) if integer else rng.random((m, k))
    y = rng.integers(0, n_classes, m)
    y[:n_classes] = np.arange(n_classes)
    w = None
    if weights:
        w = rng.random(m) + 0.05
        w /= w.sum()
    return Dataset(X, y, n_classes, w)


def gini_oracle(hist):
    hist = np.asarray(hist, float)
    p = hist / hist.sum()
    return 1.0 - (p ** 2).sum()


def accuracy(model, ds):
    return float(np.mean(model.predict(ds.features) == ds.labels))


def brute_force_split(X, y, w, K):
    """Every (feature, midpoint) candidate; first maximum in (feature, threshold) order."""
    W = w.sum()

    def imp(mask):
        h = np.bincount(y[mask], weights=w[mask], minlength=K)
        return h.sum() / W * gini_oracle(h) if h.sum() > 0 else 0.0

    parent = gini_oracle(np.bincount(y, weights=w, minlength=K))
    best = None
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            left = X[:, f] < thr
            dec = parent - imp(left) - imp(~left)
            if dec > 1e-12 and (best is None or dec > best[2] + 1e-10):
                best = (f, thr, dec)
    return best


def pruned_subtrees(tree, t=0):
    """All pruned subtrees rooted at t as (risk, splits)."""
    risk = node_risk(tree)
    if tree.feature[t] < 0:
        return [(risk[t], 0)]
    out = [(risk[t], 0)]
    pairs = itertools.product(pruned_subtrees(tree, tree.left[t]), pruned_subtrees(tree, tree.right[t]))
    for (rl, sl), (rr, sr) in pairs:
        out.append((rl + rr, sl + sr + 1))
    return out


def samme_oracle(ds, n_stages, learner):
    """Step-by-step SAMME written independently of the library."""
    m, K = ds.n_samples, ds.n_classes
    w = np.ones(m) / m
    out = []
    for stage in range(n_stages):
        g = learner(ds.with_weights(w), stage)
        miss = (g.predict(ds.features) != ds.labels).astype(float)
        err = float(np.dot(w, miss))
        if err >= 1 - 1 / K:
            break
        alpha = np.log((1 - err) / err) + np.log(K - 1)
        out.append((w.copy(), err, alpha))
        w = w * np.exp(alpha * miss)
        w = w / w.sum()
    return out


def three_class_fixture(seed=0, m=200):
    rng = np.random.default_rng(seed)
    X = rng.random((m, 2))
    y = np.digitize(X[:, 0] + 0.3 * X[:, 1] + 0.2 * rng.normal(size=m), [0.5, 0.9])
    return Dataset(X, y, 3)


def is_acyclic(g):
    """Kahn's algorithm over the child lists."""
    indeg = [0] * g.n_nodes
    for v in range(g.n_nodes):
        if g.feature[v] >= 0:
            indeg[g.left[v]] += 1
            indeg[g.right[v]] += 1
    queue = [v for v in range(g.n_nodes) if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        if g.feature[v] >= 0:
            for c in (g.left[v], g.right[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
    return seen == g.n_nodes
