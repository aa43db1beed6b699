"""Decision graphs: rooted DAGs of axis-aligned splits and class leaves.

A graph is an immutable arena of parallel arrays.  ``feature[i] == -1``
marks a leaf whose class is ``label[i]``; internal nodes route
``x[feature] < threshold`` to ``left`` and everything else to ``right``.
Nodes may have several parents.  Every structural edit returns a new graph
in canonical form: unreachable nodes dropped, root at 0, ids in
breadth-first order.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .cart import Tree
from .dataset import Dataset

SCHEMA_VERSION = 1

# class colours for DOT output; blue is reserved for "no dominant class"
PALETTE = ("#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#ffbb78")
MIXED_COLOR = "#1f77b4"
NEUTRAL_COLOR = "#ffffff"


class GraphError(ValueError):
    pass


class CycleError(GraphError):
    pass


class DanglingRef(GraphError):
    pass


class SchemaError(GraphError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionGraph:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: np.ndarray
    root: int
    n_features: int
    n_classes: int

    def __post_init__(self):
        arrays = {}
        for name, dtype in (("feature", np.int64), ("threshold", np.float64), ("left", np.int64),
                            ("right", np.int64), ("label", np.int64)):
            a = np.array(getattr(self, name), dtype=dtype)
            a.flags.writeable = False
            arrays[name] = a
            object.__setattr__(self, name, a)
        n = len(arrays["feature"])
        if n == 0 or any(len(a) != n for a in arrays.values()):
            raise SchemaError("node arrays must be non-empty and of equal length")
        if not 0 <= self.root < n:
            raise DanglingRef(f"root {self.root} outside arena of {n} nodes")
        inner = arrays["feature"] >= 0
        for side in ("left", "right"):
            ref = arrays[side][inner]
            if ((ref < 0) | (ref >= n)).any():
                raise DanglingRef(f"{side} child outside arena of {n} nodes")
        if (arrays["feature"][inner] >= self.n_features).any():
            raise SchemaError("feature index exceeds n_features")
        lab = arrays["label"][~inner]
        if ((lab < 0) | (lab >= self.n_classes)).any():
            raise SchemaError("leaf class outside [0, n_classes)")
        _check_acyclic(self)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def children(self, node: int) -> tuple[int, int] | tuple[()]:
        if self.feature[node] < 0:
            return ()
        return int(self.left[node]), int(self.right[node])

    def parents(self) -> list[list[tuple[int, int]]]:
        """``parents()[v]`` lists ``(parent, side)`` edges into ``v``; side 0 = left."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes)]
        for v in np.flatnonzero(self.feature >= 0):
            out[self.left[v]].append((int(v), 0))
            out[self.right[v]].append((int(v), 1))
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        return infer_from(self, self.root, X)


def _check_acyclic(g: DecisionGraph):
    n = len(g.feature)
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    for start in range(n):
        if state[start]:
            continue
        stack = [(start, 0)]
        state[start] = 1
        while stack:
            v, i = stack.pop()
            kids = () if g.feature[v] < 0 else (g.left[v], g.right[v])
            if i < len(kids):
                stack.append((v, i + 1))
                c = kids[i]
                if state[c] == 1:
                    raise CycleError(f"cycle through node {c}")
                if state[c] == 0:
                    state[c] = 1
                    stack.append((c, 0))
            else:
                state[v] = 2


def _min_depth(feature, left, right, root) -> dict[int, int]:
    depth = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        if feature[v] >= 0:
            for c in (left[v], right[v]):
                c = int(c)
                if c not in depth:
                    depth[c] = depth[v] + 1
                    queue.append(c)
    return depth


def build_graph(feature, threshold, left, right, label, root, n_features, n_classes) -> DecisionGraph:
    """Canonical graph from raw per-node lists: reachable nodes only,
    renumbered by (minimum depth, old id)."""
    feature = np.asarray(feature, dtype=np.int64)
    depth = _min_depth(feature, left, right, root)
    order = sorted(depth, key=lambda v: (depth[v], v))
    new = {old: i for i, old in enumerate(order)}
    f = feature[order]
    inner = f >= 0
    lft = np.array([new[int(left[v])] if feature[v] >= 0 else -1 for v in order], dtype=np.int64)
    rgt = np.array([new[int(right[v])] if feature[v] >= 0 else -1 for v in order], dtype=np.int64)
    thr = np.where(inner, np.asarray(threshold, dtype=np.float64)[order], 0.0)
    lab = np.where(inner, -1, np.asarray(label, dtype=np.int64)[order])
    return DecisionGraph(f, thr, lft, rgt, lab, 0, n_features, n_classes)


def single_leaf(label: int, n_features: int, n_classes: int) -> DecisionGraph:
    return DecisionGraph([-1], [0.0], [-1], [-1], [label], 0, n_features, n_classes)


def _as_matrix(g: DecisionGraph, X) -> np.ndarray:
    if isinstance(X, Dataset):
        X = X.features
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != g.n_features:
        raise ValueError(f"expected {g.n_features} features, got {X.shape[1]}")
    return X


def _walk(g: DecisionGraph, start: int, X: np.ndarray, record: bool = False):
    """Route every row from ``start``; optionally record (row, node) visits."""
    node = np.full(len(X), start, dtype=np.int64)
    rows = np.arange(len(X))
    visits = [(rows, node.copy())] if record else None
    while rows.size:
        f = g.feature[node[rows]]
        inner = f >= 0
        rows, f = rows[inner], f[inner]
        if not rows.size:
            break
        cur = node[rows]
        go_right = X[rows, f] >= g.threshold[cur]
        node[rows] = np.where(go_right, g.right[cur], g.left[cur])
        if record:
            visits.append((rows, node[rows]))
    return node, visits


def infer(g: DecisionGraph, x) -> tuple[int, list[int]]:
    """Class of one sample and the node path from root to leaf."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.n_features,):
        raise ValueError(f"expected {g.n_features} features, got shape {x.shape}")
    v = g.root
    path = [v]
    while g.feature[v] >= 0:
        v = int(g.right[v] if x[g.feature[v]] >= g.threshold[v] else g.left[v])
        path.append(v)
    return int(g.label[v]), path


def infer_from(g: DecisionGraph, start: int, X) -> np.ndarray:
    """Labels reached when every row of ``X`` enters the graph at ``start``."""
    if not 0 <= start < g.n_nodes:
        raise DanglingRef(f"node {start} not in graph")
    X = _as_matrix(g, X)
    node, _ = _walk(g, start, X)
    return g.label[node]


def routing_table(g: DecisionGraph, X) -> dict[int, np.ndarray]:
    """Sample indices visiting each node, in sample order.  Nodes nobody
    visits map to an empty array."""
    X = _as_matrix(g, X)
    _, visits = _walk(g, g.root, X, record=True)
    rows = np.concatenate([r for r, _ in visits])
    nodes = np.concatenate([v for _, v in visits])
    order = np.lexsort((rows, nodes))
    rows, nodes = rows[order], nodes[order]
    bounds = np.searchsorted(nodes, np.arange(g.n_nodes + 1))
    return {v: rows[bounds[v]:bounds[v + 1]] for v in range(g.n_nodes)}


def breadth_first_order(g: DecisionGraph) -> list[int]:
    """Reachable nodes by minimum edge distance from the root, ties by id."""
    depth = _min_depth(g.feature, g.left, g.right, g.root)
    return sorted(depth, key=lambda v: (depth[v], v))


def topological_order(g: DecisionGraph) -> list[int]:
    """Reachable nodes with every parent before its children."""
    reach = set(breadth_first_order(g))
    indeg = {v: 0 for v in reach}
    for v in reach:
        for c in g.children(v):
            indeg[c] += 1
    queue = deque(sorted(v for v in reach if indeg[v] == 0))
    out = []
    while queue:
        v = queue.popleft()
        out.append(v)
        for c in g.children(v):
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return out


def split_count(g: DecisionGraph) -> int:
    return int((g.feature[breadth_first_order(g)] >= 0).sum())


def leaf_count(g: DecisionGraph) -> int:
    return int((g.feature[breadth_first_order(g)] < 0).sum())


def path_lengths(g: DecisionGraph, X) -> np.ndarray:
    """Number of internal nodes on each sample's root-to-leaf path."""
    X = _as_matrix(g, X)
    _, visits = _walk(g, g.root, X, record=True)
    counts = np.zeros(len(X), dtype=np.int64)
    for rows, _ in visits[1:]:
        counts[rows] += 1
    return counts


def avg_path_length(g: DecisionGraph, X) -> tuple[float, float]:
    """Mean and (population) standard deviation of root-to-leaf path lengths."""
    lengths = path_lengths(g, X)
    return float(lengths.mean()), float(lengths.std())


def _lists(g: DecisionGraph):
    return (g.feature.tolist(), g.threshold.tolist(), g.left.tolist(),
            g.right.tolist(), g.label.tolist())


def merge_equivalent_leaves(g: DecisionGraph) -> DecisionGraph:
    """Collapse all leaves of the same class into one shared leaf."""
    feature, threshold, left, right, label = _lists(g)
    keeper: dict[int, int] = {}
    target = list(range(g.n_nodes))
    for v in breadth_first_order(g):
        if feature[v] < 0:
            target[v] = keeper.setdefault(label[v], v)
    left = [target[c] if c >= 0 else c for c in left]
    right = [target[c] if c >= 0 else c for c in right]
    return build_graph(feature, threshold, left, right, label, target[g.root], g.n_features, g.n_classes)


def _bypass(g: DecisionGraph, skip: dict[int, int]) -> DecisionGraph:
    """Redirect every reference to a node in ``skip`` to its replacement."""
    def resolve(v):
        seen = 0
        while v in skip:
            v = skip[v]
            seen += 1
            if seen > g.n_nodes:
                raise CycleError("bypass chain does not terminate")
        return v

    feature, threshold, left, right, label = _lists(g)
    left = [resolve(c) if c >= 0 else c for c in left]
    right = [resolve(c) if c >= 0 else c for c in right]
    return build_graph(feature, threshold, left, right, label, resolve(g.root), g.n_features, g.n_classes)


def prune_dead_nodes(g: DecisionGraph, X) -> DecisionGraph:
    """Drop nodes no training sample reaches.

    An internal node whose samples all leave through one side is replaced by
    that child, so every training prediction is unchanged.  Nodes nobody
    visits become unreachable and are garbage-collected.
    """
    X = _as_matrix(g, X)
    table = routing_table(g, X)
    skip = {}
    for v in np.flatnonzero(g.feature >= 0):
        rows = table[v]
        if not rows.size:
            continue
        n_right = int((X[rows, g.feature[v]] >= g.threshold[v]).sum())
        if n_right == 0:
            skip[int(v)] = int(g.left[v])
        elif n_right == rows.size:
            skip[int(v)] = int(g.right[v])
    return _bypass(g, skip)


def simplify(g: DecisionGraph, X) -> DecisionGraph:
    """Alternate dead-node pruning and redundant-split removal to a fixed point."""
    while True:
        n = g.n_nodes
        g = prune_dead_nodes(bypass_redundant_splits(g), X)
        if g.n_nodes == n:
            return g


def bypass_redundant_splits(g: DecisionGraph) -> DecisionGraph:
    """Remove internal nodes whose two edges lead to the same child."""
    skip = {int(v): int(g.left[v]) for v in np.flatnonzero(g.feature >= 0) if g.left[v] == g.right[v]}
    return _bypass(g, skip) if skip else g


def tree_to_graph(tree: Tree) -> DecisionGraph:
    label = np.where(tree.feature >= 0, -1, tree.node_class())
    return build_graph(tree.feature, tree.threshold, tree.left, tree.right, label, 0,
                       tree.n_features, tree.n_classes)


def to_dict(g: DecisionGraph) -> dict:
    nodes = []
    for v in range(g.n_nodes):
        if g.feature[v] >= 0:
            nodes.append({"id": v, "kind": "internal", "feature": int(g.feature[v]),
                          "threshold": float(g.threshold[v]), "left": int(g.left[v]),
                          "right": int(g.right[v])})
        else:
            nodes.append({"id": v, "kind": "leaf", "class": int(g.label[v])})
    return {"version": SCHEMA_VERSION, "n_features": g.n_features, "n_classes": g.n_classes,
            "root": g.root, "nodes": nodes}


def to_json(g: DecisionGraph) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(to_dict(g), indent=1)


def from_dict(doc: dict) -> DecisionGraph:
    try:
        if doc["version"] != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema version {doc['version']!r}")
        n_features, n_classes, root = int(doc["n_features"]), int(doc["n_classes"]), int(doc["root"])
        nodes = doc["nodes"]
        n = len(nodes)
        feature = [-1] * n
        threshold = [0.0] * n
        left, right, label = [-1] * n, [-1] * n, [-1] * n
        seen = set()
        for node in nodes:
            i = int(node["id"])
            if not 0 <= i < n or i in seen:
                raise SchemaError(f"node ids must be a permutation of 0..{n - 1}")
            seen.add(i)
            if node["kind"] == "internal":
                feature[i] = int(node["feature"])
                threshold[i] = float(node["threshold"])
                left[i], right[i] = int(node["left"]), int(node["right"])
                if feature[i] < 0:
                    raise SchemaError(f"node {i}: negative feature index")
            elif node["kind"] == "leaf":
                label[i] = int(node["class"])
            else:
                raise SchemaError(f"node {i}: unknown kind {node['kind']!r}")
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed model document: {exc}") from None
    g = DecisionGraph(feature, threshold, left, right, label, root, n_features, n_classes)
    if len(breadth_first_order(g)) != n:
        raise SchemaError("graph contains nodes unreachable from the root")
    return g


def from_json(text: str) -> DecisionGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    return from_dict(doc)


def dominant_classes(g: DecisionGraph, ds: Dataset) -> dict[int, int | None]:
    """Class held by strictly more than half of each node's visitors, else None."""
    table = routing_table(g, ds.features)
    out: dict[int, int | None] = {}
    for v, rows in table.items():
        if not rows.size:
            out[v] = None
            continue
        counts = np.bincount(ds.labels[rows], minlength=g.n_classes)
        top = int(np.argmax(counts))
        out[v] = top if 2 * counts[top] > rows.size else None
    return out


def to_dot(g: DecisionGraph, ds: Dataset | None = None, name: str = "G") -> str:
    """Graphviz source; with ``ds`` each node is filled by its dominant class."""
    dom = dominant_classes(g, ds) if ds is not None else None
    lines = [f"digraph {name} {{", '  node [style=filled, fontname="Helvetica"];']
    for v in breadth_first_order(g):
        if dom is None:
            color = NEUTRAL_COLOR
        elif dom[v] is None:
            color = MIXED_COLOR
        else:
            color = PALETTE[dom[v] % len(PALETTE)]
        if g.feature[v] >= 0:
            text = f"f{g.feature[v]} < {float(g.threshold[v]):.6g}"
            shape = "ellipse"
        else:
            text = f"class {g.label[v]}"
            shape = "box"
        lines.append(f'  n{v} [label="{text}", shape={shape}, fillcolor="{color}"];')
    for v in breadth_first_order(g):
        if g.feature[v] >= 0:
            lines.append(f'  n{v} -> n{g.left[v]} [label="yes"];')
            lines.append(f'  n{v} -> n{g.right[v]} [label="no"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
