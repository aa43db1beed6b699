"""Dataset container, LIBSVM/CSV loaders, splitting, resampling and the
corners toy problem."""

from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Base class for every data-loading or validation failure."""


class MalformedLine(DataError):
    pass


class InsufficientClasses(DataError):
    pass


class MissingLabelColumn(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class RaggedRows(DataError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense feature matrix with 0-based integer labels.

    ``weights`` (optional) must be non-negative and sum to one; learners fall
    back to uniform weights when it is ``None``.  ``label_map[i]`` is the
    original label that was remapped to class ``i``.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    weights: np.ndarray | None = None
    label_map: tuple | None = field(default=None)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("labels must be a vector with one entry per row")
        if not np.isfinite(X).all():
            raise NonFiniteFeature("feature matrix contains NaN or Inf")
        if self.n_classes < 2:
            raise InsufficientClasses(f"need at least 2 classes, got {self.n_classes}")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("labels must lie in [0, n_classes)")
        w = self.weights
        if w is not None:
            w = np.ascontiguousarray(w, dtype=np.float64)
            if w.shape != y.shape:
                raise DataError("weights must have one entry per row")
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise DataError("weights must be non-negative and sum to 1")
            w.flags.writeable = False
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "n_classes", int(self.n_classes))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def sample_weights(self) -> np.ndarray:
        """Weights as an array, uniform when none are attached."""
        if self.weights is None:
            return np.full(self.n_samples, 1.0 / max(self.n_samples, 1))
        return self.weights

    def subset(self, index: np.ndarray) -> Dataset:
        """Rows ``index`` (repeats allowed); weights are renormalised."""
        index = np.asarray(index, dtype=np.int64)
        w = None
        if self.weights is not None:
            w = self.weights[index]
            total = w.sum()
            w = w / total if total > 0 else np.full(len(index), 1.0 / len(index))
        return Dataset(self.features[index], self.labels[index], self.n_classes, w, self.label_map)

    def with_weights(self, weights: np.ndarray | None) -> Dataset:
        return Dataset(self.features, self.labels, self.n_classes, weights, self.label_map)


def _open_text(path: str | Path) -> io.TextIOBase:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _label_key(v):
    return float(v) if isinstance(v, (int, float)) else v


def _remap_labels(raw: Sequence[str], label_map: tuple | None = None) -> tuple[np.ndarray, tuple]:
    try:
        keys = [float(v) for v in raw]
    except ValueError:
        keys = list(raw)
    if label_map is not None:
        index = {_label_key(v): i for i, v in enumerate(label_map)}
        unknown = sorted({str(k) for k in keys if k not in index})
        if unknown:
            raise DataError(f"labels not present in the reference mapping: {', '.join(unknown[:5])}")
        return np.array([index[k] for k in keys], dtype=np.int64), tuple(label_map)
    uniq = sorted(set(keys))
    if len(uniq) < 2:
        raise InsufficientClasses(f"need at least 2 distinct labels, found {len(uniq)}")
    index = {v: i for i, v in enumerate(uniq)}
    originals = tuple(int(v) if isinstance(v, float) and v.is_integer() else v for v in uniq)
    return np.array([index[v] for v in keys], dtype=np.int64), originals


def load_libsvm(path: str | Path, n_features: int | None = None, label_map: tuple | None = None) -> Dataset:
    """Read a LIBSVM sparse text file (``label idx:val ...``, 1-based indices).

    Missing entries become 0.0.  Labels are remapped to ``0..K-1`` in sorted
    order of the original values, which are kept in ``label_map``.  Passing
    the ``label_map`` of another file (e.g. the training split) reuses it.
    """
    raw_labels: list[str] = []
    rows: list[tuple[list[int], list[float]]] = []
    max_index = 0
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            raw_labels.append(parts[0])
            cols, vals = [], []
            prev = 0
            for tok in parts[1:]:
                idx_s, sep, val_s = tok.partition(":")
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise MalformedLine(f"{path}:{lineno}: bad token {tok!r}") from None
                if not sep or idx <= prev:
                    raise MalformedLine(f"{path}:{lineno}: indices must be 1-based and strictly increasing")
                if not np.isfinite(val):
                    raise NonFiniteFeature(f"{path}:{lineno}: non-finite value {val_s!r}")
                prev = idx
                cols.append(idx - 1)
                vals.append(val)
            try:
                float(parts[0])
            except ValueError:
                raise MalformedLine(f"{path}:{lineno}: label {parts[0]!r} is not numeric") from None
            max_index = max(max_index, prev)
            rows.append((cols, vals))
    if not rows:
        raise DataError(f"{path}: empty file")
    if n_features is None:
        n_features = max_index
    elif max_index > n_features:
        raise DataError(f"{path}: feature index {max_index} exceeds n_features={n_features}")
    X = np.zeros((len(rows), n_features))
    for i, (cols, vals) in enumerate(rows):
        X[i, cols] = vals
    y, label_map = _remap_labels(raw_labels, label_map)
    return Dataset(X, y, len(label_map), label_map=label_map)


def pad_features(ds: Dataset, n_features: int) -> Dataset:
    """Append all-zero feature columns up to ``n_features``."""
    if n_features < ds.n_features:
        raise DataError(f"cannot shrink {ds.n_features} features to {n_features}")
    if n_features == ds.n_features:
        return ds
    X = np.zeros((ds.n_samples, n_features))
    X[:, :ds.n_features] = ds.features
    return Dataset(X, ds.labels, ds.n_classes, ds.weights, ds.label_map)


def write_libsvm(ds: Dataset, path: str | Path) -> None:
    """Write ``ds`` in LIBSVM format; zero entries are omitted."""
    names = ds.label_map if ds.label_map is not None else range(ds.n_classes)
    names = list(names)
    with open(path, "w") as fh:
        for row, label in zip(ds.features, ds.labels):
            nz = np.flatnonzero(row)
            items = " ".join(f"{j + 1}:{float(row[j])!r}" for j in nz)
            fh.write(f"{names[label]} {items}".rstrip() + "\n")


def load_csv(path: str | Path, label_column: str | int, header: bool = True,
             label_map: tuple | None = None) -> Dataset:
    """Read a rectangular CSV file; every column except the label is a feature."""
    with _open_text(path) as fh:
        table = [row for row in csv.reader(fh) if row]
    if not table:
        raise DataError(f"{path}: empty file")
    names = table[0] if header else None
    body = table[1:] if header else table
    if not body:
        raise DataError(f"{path}: no data rows")
    width = len(table[0])
    for lineno, row in enumerate(table, start=1):
        if len(row) != width:
            raise RaggedRows(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if names is None or label_column not in names:
            raise MissingLabelColumn(f"{path}: no column named {label_column!r}")
        col = names.index(label_column)
    else:
        col = int(label_column)
        if not -width <= col < width:
            raise MissingLabelColumn(f"{path}: label column {col} out of range")
        col %= width
    feats = []
    for lineno, row in enumerate(body, start=2 if header else 1):
        try:
            feats.append([float(v) for j, v in enumerate(row) if j != col])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric feature cell") from None
    X = np.asarray(feats, dtype=np.float64).reshape(len(body), width - 1)
    if not np.isfinite(X).all():
        raise NonFiniteFeature(f"{path}: feature matrix contains NaN or Inf")
    y, label_map = _remap_labels([row[col].strip() for row in body], label_map)
    return Dataset(X, y, len(label_map), label_map=label_map)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Unstratified random split; each part keeps the original row order."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    m = ds.n_samples
    if m < 2:
        raise DataError("need at least 2 samples to split")
    n_test = min(max(int(np.floor(test_fraction * m + 0.5)), 1), m - 1)
    perm = np.random.default_rng(seed).permutation(m)
    test = np.sort(perm[:n_test])
    train = np.sort(perm[n_test:])
    return ds.subset(train), ds.subset(test)


def bootstrap_indices(m: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, m, size=m)


def bootstrap_sample(ds: Dataset, seed: int) -> Dataset:
    """Draw ``m`` rows uniformly with replacement, keeping every feature."""
    if ds.n_samples < 1:
        raise DataError("cannot bootstrap an empty dataset")
    return ds.subset(bootstrap_indices(ds.n_samples, seed))


def corners_label(x1: np.ndarray, x2: np.ndarray, t: Sequence[float]) -> np.ndarray:
    """1 in the four corner cells, 0 elsewhere."""
    t1, t2, t3, t4 = t
    return (((x1 < t1) | (x1 >= t2)) & ((x2 < t3) | (x2 >= t4))).astype(np.int64)


def make_corners_synthetic(
    n_samples: int = 1000,
    t: Sequence[float] = (0.2, 0.8, 0.2, 0.8),
    seed: int = 0,
) -> Dataset:
    """Uniform points on the unit square labelled by :func:`corners_label`.

    The first nine points are drawn one per axis-aligned cell so every cell
    of the 3x3 grid is populated.
    """
    t1, t2, t3, t4 = map(float, t)
    if not (0.0 < t1 < t2 < 1.0 and 0.0 < t3 < t4 < 1.0):
        raise ValueError("thresholds must satisfy 0 < t1 < t2 < 1 and 0 < t3 < t4 < 1")
    if n_samples < 9:
        raise ValueError("need at least 9 samples to cover the nine cells")
    rng = np.random.default_rng(seed)
    edges1 = np.array([0.0, t1, t2, 1.0])
    edges2 = np.array([0.0, t3, t4, 1.0])
    cells = [(i, j) for i in range(3) for j in range(3)]
    lo = np.array([[edges1[i], edges2[j]] for i, j in cells])
    hi = np.array([[edges1[i + 1], edges2[j + 1]] for i, j in cells])
    seeded = lo + rng.random((9, 2)) * (hi - lo)
    rest = rng.random((n_samples - 9, 2))
    X = np.vstack([seeded, rest])
    y = corners_label(X[:, 0], X[:, 1], (t1, t2, t3, t4))
    return Dataset(X, y, 2)
