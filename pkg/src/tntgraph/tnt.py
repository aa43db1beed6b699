"""Tree-in-Tree construction of decision graphs, and node-wise fine-tuning.

Each phase visits the graph's nodes breadth-first for ``N2`` rounds and
grows, in place of every node, a cost-complexity-pruned micro tree on the
samples whose outcome depends on that node.  A grown micro tree takes over
the node's routing immediately; at the end of the phase all micro trees are
spliced into the graph, whose internal-node replacements send their leaves
to the node's original children and thereby create shared sub-graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cart import Tree, TieBreak, feature_priority, fit_pruned
from .dataset import Dataset
from .graph import (
    DecisionGraph,
    _bypass,
    breadth_first_order,
    infer_from,
    prune_dead_nodes,
    simplify,
    single_leaf,
    topological_order,
)

_ERR_TOL = 1e-12


@dataclass(frozen=True)
class TnTConfig:
    C: float = 1e-3
    N1: int = 2
    N2: int = 5
    fine_tune_rounds: int = 0
    seed: int = 0
    min_subset_size: int = 1
    tie_break: TieBreak = "lowest"
    prune_after_fine_tune: bool = True

    def __post_init__(self):
        if self.C < 0:
            raise ValueError("C must be non-negative")
        if self.N1 < 1 or self.N2 < 1:
            raise ValueError("N1 and N2 must be at least 1")
        if self.fine_tune_rounds < 0:
            raise ValueError("fine_tune_rounds must be non-negative")
        if self.min_subset_size < 1:
            raise ValueError("min_subset_size must be at least 1")


def regularization_coeff(C: float, n_total: float, n_subset: float) -> float:
    """Pruning strength for a micro tree fitted on ``n_subset`` of ``n_total``
    samples (weights may stand in for counts)."""
    if n_subset <= 0:
        raise ValueError("subset must be non-empty")
    return C * n_total / n_subset


def sensitive_mask(y: np.ndarray, y_left: np.ndarray, y_right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows whose correctness depends on the routing choice, and the side
    (0 left, 1 right) that classifies each of them correctly."""
    ok_l = y == y_left
    ok_r = y == y_right
    to_left = ok_l & ~ok_r
    to_right = ok_r & ~ok_l
    mask = to_left | to_right
    return mask, to_right[mask].astype(np.int64)


def sensitive_subset_internal(g: DecisionGraph, node: int, Xi: np.ndarray, Yi: np.ndarray):
    if g.feature[node] < 0:
        raise ValueError(f"node {node} is a leaf")
    Xi = np.asarray(Xi, dtype=np.float64).reshape(-1, g.n_features)
    Yi = np.asarray(Yi, dtype=np.int64)
    y_left = infer_from(g, int(g.left[node]), Xi)
    y_right = infer_from(g, int(g.right[node]), Xi)
    mask, target = sensitive_mask(Yi, y_left, y_right)
    return Xi[mask], target


def sensitive_subset_leaf(g: DecisionGraph, node: int, Xi: np.ndarray, Yi: np.ndarray):
    if g.feature[node] >= 0:
        raise ValueError(f"node {node} is internal")
    return np.asarray(Xi, dtype=np.float64).reshape(-1, g.n_features), np.asarray(Yi, dtype=np.int64)


def _leaf_tree(label: int, n_classes: int, n_features: int, mass: float = 0.0) -> Tree:
    value = np.zeros((1, n_classes))
    value[0, label] = mass if mass > 0 else 1.0
    return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), value,
                np.array([0]), n_features)


def _plurality(y, w, n_classes, keep: int | None = None) -> int:
    hist = np.bincount(y, weights=w, minlength=n_classes)
    if keep is not None and hist[keep] >= hist.max():
        return keep
    return int(np.argmax(hist))


class _Router:
    """Per-sample routing state of a fixed-topology graph.

    Every internal node holds a decision vector (True = right) over all
    training rows and every leaf an output vector.  Predictions from a node
    and visit masks are cached and invalidated along ancestors/descendants
    when a node's behaviour changes.
    """

    def __init__(self, g: DecisionGraph, X: np.ndarray):
        self.g = g
        self.X = X
        n, m = g.n_nodes, len(X)
        self.m = m
        self.dtype = np.int16 if g.n_classes < 2 ** 15 else np.int64
        self.dec: list[np.ndarray | None] = [None] * n
        self.out: list[np.ndarray | None] = [None] * n
        for v in range(n):
            if g.feature[v] >= 0:
                self.dec[v] = X[:, g.feature[v]] >= g.threshold[v]
            else:
                self.out[v] = np.full(m, g.label[v], dtype=self.dtype)
        self.parents = g.parents()
        order = topological_order(g)
        anc = [0] * n
        for v in order:
            bits = 1 << v
            for p, _ in self.parents[v]:
                bits |= anc[p]
            anc[v] = bits
        desc = [0] * n
        for v in reversed(order):
            if g.feature[v] >= 0:
                l, r = int(g.left[v]), int(g.right[v])
                desc[v] = (1 << l) | desc[l] | (1 << r) | desc[r]
        self.anc, self.desc = anc, desc
        self.pred: list[np.ndarray | None] = [None] * n
        self.vis: list[np.ndarray | None] = [None] * n
        self.pred_ok = 0
        self.vis_ok = 0

    def set_decision(self, v: int, dec: np.ndarray):
        if np.array_equal(dec, self.dec[v]):
            return
        self.dec[v] = dec
        self.pred_ok &= ~self.anc[v]
        self.vis_ok &= ~self.desc[v]

    def set_output(self, v: int, out: np.ndarray):
        out = out.astype(self.dtype, copy=False)
        if np.array_equal(out, self.out[v]):
            return
        self.out[v] = out
        self.pred_ok &= ~self.anc[v]

    def predictions(self, v: int) -> np.ndarray:
        """Label each training row receives when it enters the graph at ``v``."""
        g = self.g
        stack = [v]
        while stack:
            u = stack[-1]
            if self.pred_ok >> u & 1:
                stack.pop()
                continue
            if g.feature[u] < 0:
                self.pred[u] = self.out[u]
            else:
                l, r = int(g.left[u]), int(g.right[u])
                todo = [c for c in (l, r) if not self.pred_ok >> c & 1]
                if todo:
                    stack.extend(todo)
                    continue
                self.pred[u] = np.where(self.dec[u], self.pred[r], self.pred[l])
            self.pred_ok |= 1 << u
            stack.pop()
        return self.pred[v]

    def visits(self, v: int) -> np.ndarray:
        """Boolean mask of training rows that pass through ``v``."""
        root = self.g.root
        stack = [v]
        while stack:
            u = stack[-1]
            if self.vis_ok >> u & 1:
                stack.pop()
                continue
            if u == root:
                self.vis[u] = np.ones(self.m, dtype=bool)
            else:
                todo = [p for p, _ in self.parents[u] if not self.vis_ok >> p & 1]
                if todo:
                    stack.extend(todo)
                    continue
                mask = np.zeros(self.m, dtype=bool)
                for p, side in self.parents[u]:
                    mask |= self.vis[p] & (self.dec[p] if side else ~self.dec[p])
                self.vis[u] = mask
            self.vis_ok |= 1 << u
            stack.pop()
        return self.vis[v]


class _Grower:
    """One merge phase: the graph is fixed, micro trees accumulate on top."""

    def __init__(self, g: DecisionGraph, X, y, w, cfg: TnTConfig, priority, pending=None):
        self.g, self.X, self.y, self.w, self.cfg = g, X, y, w, cfg
        self.priority = priority
        self.W = w.sum()
        self.router = _Router(g, X)
        self.order = breadth_first_order(g)
        self.pending: dict[int, Tree] = {}
        for v, t in (pending or {}).items():
            self._install(v, t)

    def _install(self, v: int, t: Tree):
        self.pending[v] = t
        if self.g.feature[v] >= 0:
            self.router.set_decision(v, t.predict(self.X) == 1)
        else:
            self.router.set_output(v, t.predict(self.X))

    def _fit(self, idx, labels, n_classes) -> Tree:
        Xs, ws = self.X[idx], self.w[idx]
        alpha = regularization_coeff(self.cfg.C, self.W, ws.sum())
        return fit_pruned(Xs, labels, ws, n_classes, alpha, priority=self.priority)

    def grow_node(self, v: int):
        g, router = self.g, self.router
        rows = np.flatnonzero(router.visits(v))
        if not rows.size:
            return
        if g.feature[v] >= 0:
            y_left = router.predictions(int(g.left[v]))[rows]
            y_right = router.predictions(int(g.right[v]))[rows]
            mask, target = sensitive_mask(self.y[rows], y_left, y_right)
            idx = rows[mask]
            if not idx.size:
                # nothing depends on this node: keep its current majority side
                side = int(2 * router.dec[v][rows].sum() > rows.size)
                t = _leaf_tree(side, 2, g.n_features)
            elif idx.size < self.cfg.min_subset_size or (target == target[0]).all():
                t = _leaf_tree(_plurality(target, self.w[idx], 2), 2, g.n_features)
            else:
                t = self._fit(idx, target, 2)
        else:
            labels = self.y[rows]
            if rows.size < self.cfg.min_subset_size or (labels == labels[0]).all():
                t = _leaf_tree(_plurality(labels, self.w[rows], g.n_classes), g.n_classes, g.n_features)
            else:
                t = self._fit(rows, labels, g.n_classes)
        self._install(v, t)

    def round(self):
        for v in self.order:
            self.grow_node(v)


def _arrays(X, y, w):
    return X, y, (np.ones(len(y)) if w is None else np.asarray(w, dtype=np.float64))


def grow_round(g: DecisionGraph, ds: Dataset, cfg: TnTConfig,
               pending: dict[int, Tree] | None = None) -> dict[int, Tree]:
    """One breadth-first pass growing a micro tree in place of every visited node."""
    X, y, w = _arrays(ds.features, ds.labels, ds.weights)
    priority = feature_priority(ds.n_features, cfg.tie_break, cfg.seed)
    grower = _Grower(g, X, y, w, cfg, priority, pending)
    grower.round()
    return dict(grower.pending)


def merge_phase(g: DecisionGraph, pending: dict[int, Tree], ds: Dataset) -> DecisionGraph:
    """Splice every pending micro tree into ``g``.

    Internal-node replacements route micro leaves labelled 0/1 to the node's
    original left/right child.  Leaf replacements contribute new leaves.
    Single-leaf micro trees bypass an internal node or relabel a leaf.
    Dead and redundant nodes are removed afterwards.
    """
    feature, threshold = g.feature.tolist(), g.threshold.tolist()
    left, right, label = g.left.tolist(), g.right.tolist(), g.label.tolist()
    skip: dict[int, int] = {}

    def new_node(f=-1, thr=0.0, lab=-1):
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        label.append(lab)
        return len(feature) - 1

    for v in sorted(pending):
        t = pending[v]
        cls = t.node_class()
        internal = g.feature[v] >= 0
        if t.n_splits == 0:
            if internal:
                skip[v] = left[v] if cls[0] == 0 else right[v]
            else:
                label[v] = int(cls[0])
            continue
        targets = (left[v], right[v])
        ids = {}
        for u in range(t.n_nodes):
            if t.feature[u] >= 0:
                ids[u] = v if u == 0 else new_node()
            elif not internal:
                ids[u] = new_node(lab=int(cls[u]))

        def ref(u):
            return ids[u] if u in ids else targets[cls[u]]

        for u in range(t.n_nodes):
            if t.feature[u] >= 0:
                i = ids[u]
                feature[i], threshold[i] = int(t.feature[u]), float(t.threshold[u])
                left[i], right[i] = ref(t.left[u]), ref(t.right[u])
                label[i] = -1
    merged = DecisionGraph(feature, threshold, left, right, label, g.root, g.n_features, g.n_classes)
    return simplify(_bypass(merged, skip), ds.features)


def fit_tnt(ds: Dataset, cfg: TnTConfig = TnTConfig()) -> DecisionGraph:
    """Grow a decision graph from a single leaf; see the module docstring."""
    X, y, w = _arrays(ds.features, ds.labels, ds.weights)
    priority = feature_priority(ds.n_features, cfg.tie_break, cfg.seed)
    g = single_leaf(_plurality(y, w, ds.n_classes), ds.n_features, ds.n_classes)
    for _ in range(cfg.N1):
        grower = _Grower(g, X, y, w, cfg, priority)
        for _ in range(cfg.N2):
            grower.round()
        g = merge_phase(g, grower.pending, ds)
    if cfg.fine_tune_rounds:
        g = fine_tune(g, ds, cfg.fine_tune_rounds, prune=cfg.prune_after_fine_tune, priority=priority)
    return prune_dead_nodes(g, X)


def best_routing_split(X, target, w, priority, incumbent: tuple[int, float] | None = None):
    """Axis-aligned split minimising weighted misrouting of ``target``
    (0 = should go left).  Returns ``(feature, threshold, error)``; the
    incumbent is kept unless another split is strictly better."""
    n, k = X.shape
    w_right = np.where(target == 1, w, 0.0)   # cost if sent left
    w_left = w - w_right                      # cost if sent right
    best = None
    if incumbent is not None:
        f, thr = incumbent
        go_right = X[:, f] >= thr
        best = (f, thr, float(w_left[go_right].sum() + w_right[~go_right].sum()))
    cand = None
    for f in np.argsort(priority, kind="stable"):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        distinct = np.flatnonzero(xs[1:] > xs[:-1])
        if not distinct.size:
            continue
        # error with the first j+1 sorted rows on the left
        err = np.cumsum(w_right[order])[distinct] + (w_left.sum() - np.cumsum(w_left[order])[distinct])
        j = int(np.argmin(err))
        e = float(err[j])
        if cand is None or e < cand[2] - _ERR_TOL:
            i = distinct[j]
            thr = xs[i] + (xs[i + 1] - xs[i]) / 2.0
            if not xs[i] < thr <= xs[i + 1]:
                thr = xs[i + 1]
            cand = (int(f), float(thr), e)
    if best is None or (cand is not None and cand[2] < best[2] - _ERR_TOL):
        return cand
    return best


def fine_tune(g: DecisionGraph, ds: Dataset, rounds: int = 5, *, prune: bool = True, priority=None,
              callback: Callable[[int, np.ndarray], None] | None = None) -> DecisionGraph:
    """Alternating node-wise refinement with the topology held fixed.

    Internal nodes take the best single split for their sensitive subset and
    leaves the plurality class of their visitors.  ``callback(node, preds)``
    sees the training predictions after every node update.
    """
    X, y, w = _arrays(ds.features, ds.labels, ds.weights)
    if priority is None:
        priority = np.arange(ds.n_features)
    feature, threshold, label = g.feature.copy(), g.threshold.copy(), g.label.copy()
    router = _Router(g, X)
    order = breadth_first_order(g)
    for _ in range(rounds):
        for v in order:
            rows = np.flatnonzero(router.visits(v))
            if rows.size:
                if feature[v] >= 0:
                    y_left = router.predictions(int(g.left[v]))[rows]
                    y_right = router.predictions(int(g.right[v]))[rows]
                    mask, target = sensitive_mask(y[rows], y_left, y_right)
                    idx = rows[mask]
                    if idx.size:
                        f, thr, _ = best_routing_split(X[idx], target, w[idx], priority,
                                                       (int(feature[v]), float(threshold[v])))
                        feature[v], threshold[v] = f, thr
                        router.set_decision(v, X[:, f] >= thr)
                else:
                    label[v] = _plurality(y[rows], w[rows], g.n_classes, keep=int(label[v]))
                    router.set_output(v, np.full(len(y), label[v]))
            if callback is not None:
                callback(v, router.predictions(g.root).astype(np.int64))
    out = DecisionGraph(feature, threshold, g.left, g.right, label, g.root, g.n_features, g.n_classes)
    return simplify(out, X) if prune else out
