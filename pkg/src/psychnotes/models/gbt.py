"""Gradient-boosted regression trees with a second-order (Newton) objective."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .tree import TreeModel, as_classes, as_matrix, grow_regression_tree

OBJECTIVES = ("logistic", "logitraw", "hinge")
HESS_FLOOR = 1e-16


def _objective_name(name: str) -> str:
    # grid files use the "binary:<name>" spelling
    name = name.split(":", 1)[1] if name.startswith("binary:") else name
    if name not in OBJECTIVES:
        raise ValueError(f"unknown objective {name!r}")
    return name


def sigmoid(raw):
    """Overflow-free logistic function (scalar or array)."""
    raw = np.asarray(raw, dtype=np.float64)
    out = np.empty_like(raw)
    pos = raw >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-raw[pos]))
    e = np.exp(raw[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def logistic_grad_hess(raw, y):
    """First and second derivative of the logistic loss w.r.t. the raw score."""
    p = sigmoid(raw)
    g = p - np.asarray(y, dtype=np.float64)
    h = np.maximum(p * (1.0 - p), HESS_FLOOR)
    if np.ndim(g) == 0:
        return float(g), float(h)
    return g, h


def hinge_grad_hess(raw, y):
    """Subgradient of max(0, 1 - s*raw) with s = 2y - 1; unit hessian."""
    raw = np.asarray(raw, dtype=np.float64)
    s = 2.0 * np.asarray(y, dtype=np.float64) - 1.0
    g = np.where(s * raw < 1.0, -s, 0.0)
    h = np.ones_like(g)
    if np.ndim(g) == 0:
        return float(g), float(h)
    return g, h


def log_loss(raw, y) -> float:
    """Mean logistic loss, computed stably from raw scores."""
    raw = np.asarray(raw, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    # log(1 + e^raw) - y*raw
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


@dataclass(frozen=True)
class GbtParams:
    objective: str = "logistic"
    learning_rate: float = 0.3
    n_estimators: int = 100
    max_depth: int = 6
    min_child_weight: float = 1.0
    gamma: float = 0.0  # minimum split gain
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    reg_lambda: float = 1.0
    base_score: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objective", _objective_name(self.objective))
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0 < self.subsample <= 1 or not 0 < self.colsample_bytree <= 1:
            raise ValueError("subsample and colsample_bytree must lie in (0, 1]")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.base_score != 0.5:
            raise ValueError("only base_score=0.5 (raw score 0) is supported")

    @property
    def base_raw(self) -> float:
        return math.log(self.base_score / (1.0 - self.base_score))

    @classmethod
    def from_dict(cls, d: dict) -> "GbtParams":
        d = dict(d)
        if "random_state" in d:
            d["seed"] = d.pop("random_state")
        if "gamma_min_split_gain" in d:
            d["gamma"] = d.pop("gamma_min_split_gain")
        if "lambda_l2" in d:
            d["reg_lambda"] = d.pop("lambda_l2")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GbtModel:
    trees: list
    params: GbtParams
    n_features: int
    loss_history: list = field(default_factory=list)

    family = "gbt"

    def staged_raw(self, X):
        """Yield the raw score after each tree (starting from zero trees)."""
        X = as_matrix(X)
        raw = np.full(X.shape[0], self.params.base_raw)
        yield raw.copy()
        eta = self.params.learning_rate
        for t in self.trees:
            raw = raw + eta * t.leaf_output(X)
            yield raw.copy()

    def raw_score(self, X) -> np.ndarray:
        X = as_matrix(X)
        raw = np.full(X.shape[0], self.params.base_raw)
        eta = self.params.learning_rate
        for t in self.trees:
            raw = raw + eta * t.leaf_output(X)
        return raw

    def predict(self, X) -> np.ndarray:
        raw = self.raw_score(X)
        if self.params.objective == "logistic":
            return (sigmoid(raw) >= 0.5).astype(np.intp)
        return (raw >= 0.0).astype(np.intp)

    def decision_scores(self, X) -> np.ndarray:
        return self.raw_score(X)

    def to_payload(self) -> dict:
        return {"n_features": self.n_features, "trees": [t.to_payload() for t in self.trees]}

    @classmethod
    def from_payload(cls, payload: dict, params: GbtParams) -> "GbtModel":
        return cls([TreeModel.from_payload(p) for p in payload["trees"]], params,
                   int(payload["n_features"]))


def round_rng(seed: int, rnd: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, rnd]))


def train_gbt(X, y, params: GbtParams = GbtParams(), track_loss: bool = False) -> GbtModel:
    """Boost ``n_estimators`` trees.

    Round r draws its row and column subsamples from a generator seeded by
    (seed, r), so a longer run shares every earlier tree with a shorter one.
    """
    X = as_matrix(X)
    y = as_classes(y)
    n, d = X.shape
    if n == 0 or y.shape[0] != n:
        raise ValueError("X and y must be non-empty and aligned")
    if len(set(y.tolist())) < 2:
        raise ValueError("boosting needs both classes present")
    grad_hess = hinge_grad_hess if params.objective == "hinge" else logistic_grad_hess
    n_rows = max(1, int(round(params.subsample * n)))
    n_cols = max(1, int(params.colsample_bytree * d))
    raw = np.full(n, params.base_raw)
    trees, history = [], []
    if track_loss:
        history.append(log_loss(raw, y))
    for rnd in range(params.n_estimators):
        g, h = grad_hess(raw, y)
        rng = round_rng(params.seed, rnd)
        rows = (np.arange(n, dtype=np.intp) if n_rows >= n
                else np.sort(rng.choice(n, size=n_rows, replace=False)).astype(np.intp))
        cols = (np.arange(d, dtype=np.intp) if n_cols >= d
                else np.sort(rng.choice(d, size=n_cols, replace=False)).astype(np.intp))
        tree = grow_regression_tree(X, g, h, rows, cols, params.max_depth, params.reg_lambda,
                                    params.gamma, params.min_child_weight)
        trees.append(tree)
        raw = raw + params.learning_rate * tree.leaf_output(X)
        if track_loss:
            history.append(log_loss(raw, y))
    return GbtModel(trees, params, d, history)


def predict_gbt(model: GbtModel, x):
    """(raw score, class index) for one sample, or arrays for a batch."""
    raw = model.raw_score(x)
    labels = model.predict(x)
    if np.ndim(x) == 1 or hasattr(x, "indices"):
        return float(raw[0]), int(labels[0])
    return raw, labels


def training_hessian_sums(model: GbtModel, X, y) -> list:
    """Replay training and return, per tree, the hessian sum at every leaf.

    Only valid without row subsampling (the full set reaches every tree).
    """
    X = as_matrix(X)
    y = as_classes(y)
    grad_hess = hinge_grad_hess if model.params.objective == "hinge" else logistic_grad_hess
    raw = np.full(X.shape[0], model.params.base_raw)
    out = []
    for t in model.trees:
        _, h = grad_hess(raw, y)
        leaves = t.apply(X)
        out.append({int(l): float(h[leaves == l].sum()) for l in np.unique(leaves)})
        raw = raw + model.params.learning_rate * t.leaf_output(X)
    return out
