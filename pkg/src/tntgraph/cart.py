"""Axis-aligned CART: weighted Gini split search, depth-first and best-first
growth, and minimal cost-complexity pruning.

The same engine fits the baseline classifier and every micro tree grown
inside a decision graph.  Split convention everywhere: ``x[f] < threshold``
goes left, ``x[f] >= threshold`` goes right.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .dataset import Dataset

TieBreak = Literal["lowest", "random"]

# relative slack for treating two candidate scores as equal
_TIE_RTOL = 512 * np.finfo(float).eps
# absolute slack used when comparing pruning costs
_PRUNE_TOL = 1e-12
# cap on the (samples x features x classes) block scanned at once
_BLOCK = 1 << 21


@dataclass(frozen=True, eq=False)
class Tree:
    """Binary tree stored as parallel arrays; node 0 is the root.

    ``feature[i] == -1`` marks a leaf.  ``value[i]`` holds the weighted class
    totals of the training samples that reached node ``i``; a leaf predicts
    the argmax (lowest class on ties).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_classes(self) -> int:
        return self.value.shape[1]

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    @property
    def n_leaves(self) -> int:
        return self.n_nodes - self.n_splits

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def node_class(self) -> np.ndarray:
        return np.argmax(self.value, axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while rows.size:
            f = self.feature[node[rows]]
            inner = f >= 0
            rows, f = rows[inner], f[inner]
            if not rows.size:
                break
            cur = node[rows]
            go_right = X[rows, f] >= self.threshold[cur]
            node[rows] = np.where(go_right, self.right[cur], self.left[cur])
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.node_class()[self.apply(X)]


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    decrease: float  # Gini decrease normalised by the node's weight


@dataclass(frozen=True)
class PruneSchedule:
    """Weakest-link sequence: ``alphas[i]`` is where the tree shrinks to
    ``n_splits[i]`` splits."""

    alphas: tuple[float, ...]
    n_splits: tuple[int, ...]


@dataclass(frozen=True)
class CartConfig:
    """Baseline CART settings.

    ``mode="best_first"`` stops at ``max_splits``; ``mode="depth_first"``
    grows until no positive-gain split remains and then prunes with
    ``ccp_alpha`` (0 keeps the full tree).
    """

    mode: Literal["depth_first", "best_first"] = "depth_first"
    max_splits: int | None = None
    min_leaf_size: int = 1
    ccp_alpha: float = 0.0
    seed: int = 0
    tie_break: TieBreak = "lowest"


def gini(hist: np.ndarray) -> float:
    """``1 - sum p_k^2`` of a class histogram."""
    hist = np.asarray(hist, dtype=np.float64)
    if (hist < 0).any():
        raise ValueError("histogram entries must be non-negative")
    total = hist.sum()
    if total <= 0:
        raise ValueError("histogram has no mass")
    p = hist / total
    return float(1.0 - np.dot(p, p))


def feature_priority(n_features: int, tie_break: TieBreak = "lowest", seed: int | None = 0) -> np.ndarray:
    """Rank of each feature when equal-gain splits compete (lower wins).

    ``"random"`` draws one permutation per fit, so the outcome does not depend
    on the order in which nodes are expanded.
    """
    if tie_break == "lowest":
        return np.arange(n_features)
    if tie_break == "random":
        perm = np.random.default_rng(seed).permutation(n_features)
        rank = np.empty(n_features, dtype=np.int64)
        rank[perm] = np.arange(n_features)
        return rank
    raise ValueError(f"unknown tie_break {tie_break!r}")


def _normalise_weights(w: np.ndarray) -> np.ndarray:
    # equal weights become exact unit counts so tied partitions score identically
    if w.size and np.all(w == w[0]) and w[0] > 0:
        return np.ones_like(w)
    return w


def _scan_gini(X, y, w, n_classes, priority, min_leaf_size):
    """Best (feature, threshold, weighted decrease) by Gini, or None."""
    n, k = X.shape
    if n < max(2, 2 * min_leaf_size):
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = w
    total = onehot.sum(axis=0)
    W = total.sum()
    if W <= 0 or np.count_nonzero(total) < 2:
        return None
    parent = float(np.dot(total, total)) / W
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    distinct = xs[1:] > xs[:-1]
    if min_leaf_size > 1:
        distinct[: min_leaf_size - 1] = False
        distinct[n - min_leaf_size:] = False
    fbest = np.full(k, -np.inf)
    fpos = np.zeros(k, dtype=np.int64)
    step = max(1, _BLOCK // max(1, n * n_classes))
    for f0 in range(0, k, step):
        f1 = min(k, f0 + step)
        valid = distinct[:, f0:f1]
        if not valid.any():
            continue
        cum = np.cumsum(onehot[order[:, f0:f1]], axis=0)[:-1]
        wl = cum.sum(axis=2)
        wr = W - wl
        rest = total - cum
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.einsum("ijk,ijk->ij", cum, cum) / wl + np.einsum("ijk,ijk->ij", rest, rest) / wr
        score[~(valid & (wl > 0) & (wr > 0))] = -np.inf
        mx = score.max(axis=0)
        fbest[f0:f1] = mx
        tol = _TIE_RTOL * W
        fpos[f0:f1] = np.argmax(score >= (mx - tol)[None, :], axis=0)
    best = fbest.max()
    tol = _TIE_RTOL * W
    if not np.isfinite(best) or best - parent <= tol:
        return None
    cands = np.flatnonzero(fbest >= best - tol)
    f = int(cands[np.argmin(priority[cands])])
    i = fpos[f]
    lo, hi = xs[i, f], xs[i + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo < thr <= hi:
        thr = hi
    return f, float(thr), float(fbest[f] - parent)


def best_split(
    ds: Dataset,
    samples: np.ndarray | None = None,
    weights: np.ndarray | None = None,
    *,
    min_leaf_size: int = 1,
    priority: np.ndarray | None = None,
) -> Split | None:
    """Gini-optimal midpoint split of ``samples`` (all rows by default).

    Ties go to the lower feature (or lower ``priority``), then the lower
    threshold.  Returns None when no split strictly lowers the impurity.
    """
    idx = np.arange(ds.n_samples) if samples is None else np.asarray(samples, dtype=np.int64)
    w = ds.sample_weights() if weights is None else np.asarray(weights, dtype=np.float64)
    w = _normalise_weights(w[idx])
    if priority is None:
        priority = np.arange(ds.n_features)
    res = _scan_gini(ds.features[idx], ds.labels[idx], w, ds.n_classes, priority, min_leaf_size)
    if res is None:
        return None
    f, thr, dec = res
    return Split(f, thr, dec / w.sum())


class _Builder:
    def __init__(self, n_classes):
        self.n_classes = n_classes
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.count = [], []

    def add(self, hist, count):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(hist)
        self.count.append(count)
        return len(self.feature) - 1

    def build(self, n_features) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64).reshape(-1, self.n_classes),
            n_node_samples=np.asarray(self.count, dtype=np.int64),
            n_features=n_features,
        )


def _hist(y, w, n_classes):
    return np.bincount(y, weights=w, minlength=n_classes).astype(np.float64)


def _grow(X, y, w, n_classes, *, best_first=False, max_splits=None, min_leaf_size=1,
          stop_risk=None, priority=None) -> Tree:
    """Grow a tree on all rows.

    ``stop_risk`` skips splitting any node whose leaf risk
    ``W_t / W * gini_t`` is at most that value; such nodes are always leaves
    after pruning at ``alpha = stop_risk``, so the pruned result is unchanged.
    """
    n, k = X.shape
    if priority is None:
        priority = np.arange(k)
    w = _normalise_weights(np.asarray(w, dtype=np.float64))
    W = w.sum()
    b = _Builder(n_classes)

    def splittable(hist):
        if stop_risk is None:
            return True
        wt = hist.sum()
        if wt <= 0:
            return False
        risk = (wt - np.dot(hist, hist) / wt) / W
        return risk > stop_risk

    def search(idx, hist):
        if len(idx) < 2 or not splittable(hist):
            return None
        return _scan_gini(X[idx], y[idx], w[idx], n_classes, priority, min_leaf_size)

    root_idx = np.arange(n)
    root_hist = _hist(y, w, n_classes)
    if best_first:
        budget = np.inf if max_splits is None else max_splits
        root = b.add(root_hist, n)
        heap = []
        res = search(root_idx, root_hist)
        if res is not None:
            heapq.heappush(heap, (-res[2], root, res, root_idx))
        n_splits = 0
        while heap and n_splits < budget:
            _, node, (f, thr, _), idx = heapq.heappop(heap)
            go_left = X[idx, f] < thr
            b.feature[node], b.threshold[node] = f, thr
            for side, part in (("l", idx[go_left]), ("r", idx[~go_left])):
                hist = _hist(y[part], w[part], n_classes)
                child = b.add(hist, len(part))
                if side == "l":
                    b.left[node] = child
                else:
                    b.right[node] = child
                res = search(part, hist)
                if res is not None:
                    heapq.heappush(heap, (-res[2], child, res, part))
            n_splits += 1
        return b.build(k)

    # depth-first, preorder numbering
    stack = [(root_idx, root_hist, -1, "")]
    while stack:
        idx, hist, parent, side = stack.pop()
        node = b.add(hist, len(idx))
        if parent >= 0:
            if side == "l":
                b.left[parent] = node
            else:
                b.right[parent] = node
        res = search(idx, hist)
        if res is None:
            continue
        f, thr, _ = res
        go_left = X[idx, f] < thr
        b.feature[node], b.threshold[node] = f, thr
        li, ri = idx[go_left], idx[~go_left]
        stack.append((ri, _hist(y[ri], w[ri], n_classes), node, "r"))
        stack.append((li, _hist(y[li], w[li], n_classes), node, "l"))
    return b.build(k)


def fit_cart(
    ds: Dataset,
    mode: Literal["depth_first", "best_first"] = "depth_first",
    *,
    max_splits: int | None = None,
    min_leaf_size: int = 1,
    weights: np.ndarray | None = None,
    rng_seed: int | None = 0,
    tie_break: TieBreak = "lowest",
) -> Tree:
    """Fit an unpruned CART tree.

    ``best_first`` repeatedly expands the frontier leaf with the largest
    weighted impurity decrease until ``max_splits`` internal nodes exist.
    """
    if mode not in ("depth_first", "best_first"):
        raise ValueError(f"unknown mode {mode!r}")
    w = ds.sample_weights() if weights is None else np.asarray(weights, dtype=np.float64)
    priority = feature_priority(ds.n_features, tie_break, rng_seed)
    return _grow(ds.features, ds.labels, w, ds.n_classes, best_first=mode == "best_first",
                 max_splits=max_splits, min_leaf_size=min_leaf_size, priority=priority)


def fit_cart_config(ds: Dataset, cfg: CartConfig) -> Tree:
    if cfg.mode == "best_first":
        return fit_cart(ds, "best_first", max_splits=cfg.max_splits, min_leaf_size=cfg.min_leaf_size,
                        rng_seed=cfg.seed, tie_break=cfg.tie_break)
    if cfg.ccp_alpha > 0:
        return fit_pruned(ds.features, ds.labels, ds.sample_weights(), ds.n_classes, cfg.ccp_alpha,
                          priority=feature_priority(ds.n_features, cfg.tie_break, cfg.seed),
                          min_leaf_size=cfg.min_leaf_size)
    return fit_cart(ds, min_leaf_size=cfg.min_leaf_size, rng_seed=cfg.seed, tie_break=cfg.tie_break)


def node_risk(tree: Tree) -> np.ndarray:
    """Per-node leaf risk ``W_t / W_root * gini_t``."""
    wt = tree.value.sum(axis=1)
    W = wt[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = (wt - np.einsum("ij,ij->i", tree.value, tree.value) / wt) / W
    return np.where(wt > 0, r, 0.0)


def _subtree(tree: Tree, keep: np.ndarray) -> Tree:
    """Copy of ``tree`` where internal nodes with ``keep == False`` become leaves."""
    b = _Builder(tree.n_classes)
    stack = [(0, -1, "")]
    while stack:
        old, parent, side = stack.pop()
        node = b.add(tree.value[old], tree.n_node_samples[old])
        if parent >= 0:
            if side == "l":
                b.left[parent] = node
            else:
                b.right[parent] = node
        if tree.feature[old] >= 0 and keep[old]:
            b.feature[node], b.threshold[node] = int(tree.feature[old]), float(tree.threshold[old])
            stack.append((tree.right[old], node, "r"))
            stack.append((tree.left[old], node, "l"))
    return b.build(tree.n_features)


def _check_histograms(tree: Tree):
    inner = np.flatnonzero(tree.feature >= 0)
    summed = tree.value[tree.left[inner]] + tree.value[tree.right[inner]]
    if not np.allclose(summed, tree.value[inner], rtol=1e-9, atol=1e-12):
        raise ValueError("node histograms are inconsistent with the tree structure")


def ccp_prune(tree: Tree, alpha: float) -> Tree:
    """Smallest subtree minimising ``R(t) + alpha * |t|``.

    ``R`` sums ``W_leaf / W_root * gini(leaf)`` over leaves and ``|t|`` counts
    splits.  This is the member of the weakest-link sequence selected by
    ``alpha``; it is found directly by a bottom-up comparison.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    _check_histograms(tree)
    risk = node_risk(tree)
    cost = risk.copy()
    keep = np.zeros(tree.n_nodes, dtype=bool)
    # children always carry larger ids than their parent
    for t in range(tree.n_nodes - 1, -1, -1):
        if tree.feature[t] < 0:
            continue
        branch = cost[tree.left[t]] + cost[tree.right[t]] + alpha
        if risk[t] > branch + _PRUNE_TOL:
            keep[t] = True
            cost[t] = branch
    return _subtree(tree, keep)


def prune_schedule(tree: Tree) -> PruneSchedule:
    """Weakest-link pruning sequence of ``tree`` down to the root leaf."""
    _check_histograms(tree)
    risk = node_risk(tree)
    alive = tree.feature >= 0   # internal nodes still present
    n = tree.n_nodes
    alphas, counts = [0.0], [int(alive.sum())]
    while alive.any():
        leaf_risk = np.zeros(n)
        leaves = np.zeros(n, dtype=np.int64)
        present = np.zeros(n, dtype=bool)
        present[0] = True
        for t in range(n):
            if present[t] and alive[t]:
                present[tree.left[t]] = present[tree.right[t]] = True
        for t in range(n - 1, -1, -1):
            if not present[t]:
                continue
            if alive[t]:
                leaf_risk[t] = leaf_risk[tree.left[t]] + leaf_risk[tree.right[t]]
                leaves[t] = leaves[tree.left[t]] + leaves[tree.right[t]]
            else:
                leaf_risk[t], leaves[t] = risk[t], 1
        inner = np.flatnonzero(present & alive)
        g = (risk[inner] - leaf_risk[inner]) / (leaves[inner] - 1)
        a = float(g.min())
        cut = inner[g <= a + _PRUNE_TOL]
        alive[cut] = False
        # descendants of cut nodes disappear with them
        present[:] = False
        present[0] = True
        for t in range(n):
            if present[t] and tree.feature[t] >= 0:
                if alive[t]:
                    present[tree.left[t]] = present[tree.right[t]] = True
        alive &= present
        if a <= alphas[-1]:
            alphas[-1], counts[-1] = alphas[-1], int(alive.sum())
        else:
            alphas.append(a)
            counts.append(int(alive.sum()))
    return PruneSchedule(tuple(alphas), tuple(counts))


def fit_pruned(X, y, w, n_classes: int, alpha: float, *, priority=None, min_leaf_size: int = 1) -> Tree:
    """Depth-first CART followed by ``ccp_prune(alpha)``.

    Nodes whose leaf risk is already at most ``alpha`` are never expanded;
    they cannot survive pruning, so the result equals pruning the full tree.
    """
    tree = _grow(X, y, w, n_classes, min_leaf_size=min_leaf_size, stop_risk=alpha, priority=priority)
    return ccp_prune(tree, alpha)


def tree_predict(tree: Tree, x: np.ndarray) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError(f"expected {tree.n_features} features, got shape {x.shape}")
    node = 0
    while tree.feature[node] >= 0:
        node = tree.right[node] if x[tree.feature[node]] >= tree.threshold[node] else tree.left[node]
    return int(np.argmax(tree.value[node]))
