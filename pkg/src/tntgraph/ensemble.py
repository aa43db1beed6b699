"""Bagging and multi-class AdaBoost (SAMME) over decision-graph learners,
and the log-spaced C search that hits a split budget."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .cart import CartConfig, fit_cart_config
from .dataset import Dataset, bootstrap_sample
from .graph import DecisionGraph, from_dict, split_count, to_dict, tree_to_graph
from .ndg import NdgConfig, fit_ndg
from .tnt import TnTConfig, fit_tnt

LearnerConfig = Union[TnTConfig, CartConfig, NdgConfig]

# per-dataset C search ranges for budget tuning
C_RANGES = {
    "mnist": (1e-4, 5e-2),
    "connect-4": (6e-5, 1e-2),
    "letter": (5e-5, 2e-2),
    "optdigits": (3e-4, 6e-2),
    "pendigits": (5e-4, 1e-1),
    "protein": (8e-4, 1e-2),
    "senseit": (3e-4, 1e-2),
    "usps": (8e-4, 3e-2),
}
DEFAULT_C_RANGE = (1e-4, 1e-1)
_ALIASES = {"connect4": "connect-4", "optical": "optdigits", "optical-recognition": "optdigits",
            "sensit": "senseit"}

# alpha used when a stage fits its weighted sample perfectly
_ERR_FREE_LOGIT = math.log(1e12)


def c_range_for(name: str | None) -> tuple[float, float]:
    """Default C range for a dataset name (case-insensitive prefix match)."""
    if not name:
        return DEFAULT_C_RANGE
    key = name.lower()
    key = _ALIASES.get(key, key)
    for known in sorted(C_RANGES, key=len, reverse=True):
        if key.startswith(known) or key.startswith(known.replace("-", "")):
            return C_RANGES[known]
    for alias, known in _ALIASES.items():
        if key.startswith(alias):
            return C_RANGES[known]
    return DEFAULT_C_RANGE


def fit_learner(ds: Dataset, cfg: LearnerConfig) -> DecisionGraph:
    """Fit any supported base learner, honouring ``ds.weights``."""
    if isinstance(cfg, TnTConfig):
        return fit_tnt(ds, cfg)
    if isinstance(cfg, CartConfig):
        return tree_to_graph(fit_cart_config(ds, cfg))
    if isinstance(cfg, NdgConfig):
        return fit_ndg(ds, cfg)
    raise TypeError(f"unsupported learner config {type(cfg).__name__}")


def with_seed(cfg: LearnerConfig, seed: int) -> LearnerConfig:
    return replace(cfg, seed=seed)


def with_c(cfg: LearnerConfig, C: float) -> LearnerConfig:
    if isinstance(cfg, CartConfig):
        return replace(cfg, ccp_alpha=C)
    return replace(cfg, C=C)


def _vote(preds: np.ndarray, weights: np.ndarray, n_classes: int) -> np.ndarray:
    """Weighted plurality per column of ``preds`` (estimators x samples);
    ties resolve to the lowest class."""
    scores = np.zeros((n_classes, preds.shape[1]))
    for p, a in zip(preds, weights):
        scores[p, np.arange(preds.shape[1])] += a
    return np.argmax(scores, axis=0)


def _as_matrix(X) -> np.ndarray:
    X = X.features if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


@dataclass(frozen=True, eq=False)
class BaggingModel:
    estimators: tuple[DecisionGraph, ...]
    seeds: tuple[int, ...]

    def __post_init__(self):
        if not self.estimators:
            raise ValueError("ensemble needs at least one estimator")
        shape = {(e.n_features, e.n_classes) for e in self.estimators}
        if len(shape) != 1:
            raise ValueError("estimators disagree on n_features / n_classes")

    @property
    def n_classes(self) -> int:
        return self.estimators[0].n_classes

    @property
    def n_splits(self) -> int:
        return sum(split_count(e) for e in self.estimators)

    def predict(self, X) -> np.ndarray:
        return predict_bagging(self, X)


@dataclass(frozen=True)
class BoostStage:
    weights: np.ndarray   # sample weights the estimator was trained on
    error: float
    alpha: float | None   # None when the estimator was discarded


@dataclass(frozen=True, eq=False)
class AdaBoostModel:
    estimators: tuple[DecisionGraph, ...]
    alphas: tuple[float, ...]
    trace: tuple[BoostStage, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self.estimators or len(self.estimators) != len(self.alphas):
            raise ValueError("need one alpha per estimator and at least one estimator")
        if not all(math.isfinite(a) for a in self.alphas):
            raise ValueError("alphas must be finite")

    @property
    def n_classes(self) -> int:
        return self.estimators[0].n_classes

    @property
    def n_splits(self) -> int:
        return sum(split_count(e) for e in self.estimators)

    def predict(self, X) -> np.ndarray:
        return predict_adaboost(self, X)


def _fit_one_bag(args):
    ds, cfg, seed, bootstrap = args
    data = bootstrap_sample(ds, seed) if bootstrap else ds
    return fit_learner(data, with_seed(cfg, seed))


def fit_bagging(ds: Dataset, n_estimators: int, base: LearnerConfig, seed: int | None = None,
                *, bootstrap: bool = True, n_jobs: int = 1) -> BaggingModel:
    """Estimator ``i`` is fitted on ``bootstrap_sample(ds, seed + i)`` with
    learner seed ``seed + i``; ``bootstrap=False`` uses ``ds`` itself."""
    if n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    seed = base.seed if seed is None else seed
    seeds = tuple(seed + i for i in range(n_estimators))
    jobs = [(ds, base, s, bootstrap) for s in seeds]
    if n_jobs > 1 and n_estimators > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            estimators = tuple(pool.map(_fit_one_bag, jobs))
    else:
        estimators = tuple(map(_fit_one_bag, jobs))
    return BaggingModel(estimators, seeds)


def predict_bagging(model: BaggingModel, X) -> np.ndarray:
    X = _as_matrix(X)
    preds = np.array([e.predict(X) for e in model.estimators])
    return _vote(preds, np.ones(len(preds)), model.n_classes)


def samme_alpha(err: float, n_classes: int, learning_rate: float = 1.0) -> float:
    if err <= 0:
        return learning_rate * (_ERR_FREE_LOGIT + math.log(n_classes - 1))
    return learning_rate * (math.log((1.0 - err) / err) + math.log(n_classes - 1))


def fit_adaboost(ds: Dataset, n_estimators: int, base: LearnerConfig, learning_rate: float = 1.0,
                 seed: int | None = None) -> AdaBoostModel:
    """SAMME boosting; stage ``i`` fits the learner with seed ``seed + i``."""
    if n_estimators < 1:
        raise ValueError("n_estimators must be at least 1")
    if learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    seed = base.seed if seed is None else seed
    K = ds.n_classes
    m = ds.n_samples
    w = np.full(m, 1.0 / m)
    estimators, alphas, trace = [], [], []
    for i in range(n_estimators):
        g = fit_learner(ds.with_weights(w), with_seed(base, seed + i))
        wrong = g.predict(ds.features) != ds.labels
        err = float(w[wrong].sum())
        # slack absorbs rounding in the weighted sum at exactly chance level
        if err >= 1.0 - 1.0 / K - 1e-12:
            trace.append(BoostStage(w, err, None))
            break
        alpha = samme_alpha(err, K, learning_rate)
        estimators.append(g)
        alphas.append(alpha)
        trace.append(BoostStage(w, err, alpha))
        if err <= 0:
            break
        w = w * np.exp(alpha * wrong)
        w = w / w.sum()
    if not estimators:
        raise RuntimeError("first boosting stage is no better than chance; no estimator kept")
    return AdaBoostModel(tuple(estimators), tuple(alphas), tuple(trace))


def predict_adaboost(model: AdaBoostModel, X) -> np.ndarray:
    X = _as_matrix(X)
    preds = np.array([e.predict(X) for e in model.estimators])
    return _vote(preds, np.asarray(model.alphas), model.n_classes)


def _fit_splits(args):
    ds, cfg = args
    return split_count(fit_learner(ds, cfg))


def sweep_c(ds: Dataset, learner: LearnerConfig, c_range: tuple[float, float], grid_size: int = 30,
            n_jobs: int = 1) -> tuple[np.ndarray, list[int]]:
    """Split count at each of ``grid_size`` log-spaced C values."""
    c_min, c_max = c_range
    if not 0 < c_min <= c_max:
        raise ValueError("need 0 < c_min <= c_max")
    if grid_size < 1:
        raise ValueError("grid_size must be at least 1")
    grid = np.geomspace(c_min, c_max, grid_size)
    jobs = [(ds, with_c(learner, float(c))) for c in grid]
    if n_jobs > 1 and grid_size > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            counts = list(pool.map(_fit_splits, jobs))
    else:
        counts = list(map(_fit_splits, jobs))
    return grid, counts


def tune_c_for_budget(ds: Dataset, target_splits: int, learner: LearnerConfig,
                      c_range: tuple[float, float], grid_size: int = 30, n_jobs: int = 1) -> tuple[float, int]:
    """Grid C whose fitted split count is closest to ``target_splits``;
    ties go to the larger C."""
    grid, counts = sweep_c(ds, learner, c_range, grid_size, n_jobs)
    return closest_c(grid, counts, target_splits)


def closest_c(grid, counts, target_splits: int) -> tuple[float, int]:
    """Pick from a finished sweep; ties go to the larger C."""
    best = min(range(len(grid)), key=lambda i: (abs(counts[i] - target_splits), -grid[i]))
    return float(grid[best]), counts[best]


def per_estimator_budget(target_splits: int, n_estimators: int) -> int:
    return max(int(round(target_splits / n_estimators)), 0)


def ensemble_to_dict(model: BaggingModel | AdaBoostModel) -> dict:
    doc = {"version": 1, "kind": "bagging" if isinstance(model, BaggingModel) else "adaboost"}
    if isinstance(model, AdaBoostModel):
        doc["alphas"] = list(model.alphas)
    else:
        doc["seeds"] = list(model.seeds)
    doc["estimators"] = [to_dict(e) for e in model.estimators]
    return doc


def ensemble_to_json(model: BaggingModel | AdaBoostModel) -> str:
    return json.dumps(ensemble_to_dict(model), indent=1)


def ensemble_from_dict(doc: dict) -> BaggingModel | AdaBoostModel:
    from .graph import SchemaError

    try:
        if doc["version"] != 1:
            raise SchemaError(f"unsupported ensemble version {doc['version']!r}")
        estimators = tuple(from_dict(e) for e in doc["estimators"])
        if doc["kind"] == "bagging":
            seeds = tuple(doc.get("seeds", range(len(estimators))))
            return BaggingModel(estimators, seeds)
        if doc["kind"] == "adaboost":
            return AdaBoostModel(estimators, tuple(float(a) for a in doc["alphas"]))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed ensemble document: {exc}") from None
    raise SchemaError(f"unknown ensemble kind {doc['kind']!r}")


def ensemble_from_json(text: str) -> BaggingModel | AdaBoostModel:
    return ensemble_from_dict(json.loads(text))


def total_splits(models: Sequence[DecisionGraph]) -> int:
    return sum(split_count(g) for g in models)
