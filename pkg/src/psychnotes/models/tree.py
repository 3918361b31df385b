"""Binary decision trees: greedy classification trees and the regression trees
grown by gradient boosting share one array-based representation."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .. import _kernels
from ..features import to_matrix
from .impurity import CRITERIA

log = logging.getLogger(__name__)

_CRITERION_CODE = {"gini": _kernels.GINI, "entropy": _kernels.ENTROPY,
                   "log_loss": _kernels.LOG_LOSS}
MAX_FEATURES = ("sqrt", "log2", "all")


def as_matrix(X) -> np.ndarray:
    if isinstance(X, np.ndarray):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return X.reshape(1, -1) if X.ndim == 1 else X
    if hasattr(X, "indices"):
        return X.to_dense().reshape(1, -1)
    X = list(X)
    if X and hasattr(X[0], "indices"):
        return to_matrix(X)
    return np.ascontiguousarray(np.asarray(X, dtype=np.float64))


def as_classes(y) -> np.ndarray:
    return np.asarray([int(v) for v in y], dtype=np.intp)


def node_rng(seed: int, node_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, node_id]))


def n_candidate_features(max_features: str, d: int) -> int:
    if max_features == "sqrt":
        return max(1, int(math.sqrt(d)))
    if max_features == "log2":
        return max(1, int(math.log2(d))) if d > 1 else 1
    return d


@dataclass(frozen=True)
class TreeParams:
    criterion: str = "gini"
    splitter: str = "best"
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str = "all"
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter {self.splitter!r}")
        if self.max_features is None:
            object.__setattr__(self, "max_features", "all")
        if self.max_features not in MAX_FEATURES:
            raise ValueError(f"unknown max_features {self.max_features!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            log.warning("min_samples_split=%s clamped to 2", self.min_samples_split)
            object.__setattr__(self, "min_samples_split", 2)
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TreeParams":
        d = dict(d)
        if "random_state" in d:
            d["seed"] = d.pop("random_state")
        mwfl = d.pop("min_weight_fraction_leaf", 0.0)
        if mwfl not in (0, 0.0):
            raise ValueError("only min_weight_fraction_leaf=0.0 is supported")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TreeModel:
    """Flat arrays indexed by node id (preorder); ``feature < 0`` marks a leaf.

    ``value`` holds class probabilities for classification trees and a
    single leaf weight for boosting trees. ``score`` is the split's impurity
    decrease or gain (NaN at leaves); ``cover`` is the sample count or the
    hessian sum reaching the node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    score: np.ndarray
    cover: np.ndarray
    params: Optional[TreeParams] = None
    n_features: int = 0

    family = "tree"

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        def _d(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(_d(self.left[node]), _d(self.right[node]))
        return _d(0)

    def apply(self, X) -> np.ndarray:
        """Leaf id reached by each row; ties (value == threshold) go left."""
        X = as_matrix(X)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lower-ordinal class on ties
        return np.argmax(self.predict_proba(X), axis=1).astype(np.intp)

    def decision_scores(self, X) -> np.ndarray:
        return self.predict_proba(X)[:, 1]

    def leaf_output(self, X) -> np.ndarray:
        return self.value[self.apply(X), 0]

    def to_payload(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "score": [None if math.isnan(s) else s for s in self.score.tolist()],
            "cover": self.cover.tolist(),
            "n_features": self.n_features,
        }

    @classmethod
    def from_payload(cls, payload: dict, params: Optional[TreeParams] = None) -> "TreeModel":
        return cls(
            feature=np.asarray(payload["feature"], dtype=np.intp),
            threshold=np.asarray(payload["threshold"], dtype=np.float64),
            left=np.asarray(payload["left"], dtype=np.intp),
            right=np.asarray(payload["right"], dtype=np.intp),
            value=np.asarray(payload["value"], dtype=np.float64).reshape(len(payload["feature"]), -1),
            score=np.asarray([np.nan if s is None else s for s in payload["score"]], dtype=np.float64),
            cover=np.asarray(payload["cover"], dtype=np.float64),
            params=params,
            n_features=int(payload["n_features"]),
        )


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.score, self.cover = [], [], []

    def new_node(self, value, cover) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.score.append(math.nan)
        self.cover.append(cover)
        return len(self.feature) - 1

    def finish(self, params, n_features) -> TreeModel:
        return TreeModel(
            feature=np.asarray(self.feature, dtype=np.intp),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.intp),
            right=np.asarray(self.right, dtype=np.intp),
            value=np.asarray(self.value, dtype=np.float64),
            score=np.asarray(self.score, dtype=np.float64),
            cover=np.asarray(self.cover, dtype=np.float64),
            params=params,
            n_features=n_features,
        )


def _random_split(X, y, samples, feats, rng, criterion, min_leaf):
    """One uniform threshold per candidate feature; best of those."""
    V = X[np.ix_(samples, feats)]
    lo, hi = V.min(axis=0), V.max(axis=0)
    u = rng.random(feats.shape[0])
    thr = lo + u * (hi - lo)
    thr = np.where(thr >= hi, lo, thr)
    m = samples.shape[0]
    left = V <= thr
    nl = left.sum(axis=0)
    nr = m - nl
    ys = y[samples]
    c1l = (left & (ys[:, None] == 1)).sum(axis=0)
    total1 = int(ys.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        parent = float(_kernels.binary_impurity(total1, m, criterion))
        score = parent - ((nl / m) * _kernels.binary_impurity(c1l, np.maximum(nl, 1), criterion)
                          + (nr / m) * _kernels.binary_impurity(total1 - c1l, np.maximum(nr, 1), criterion))
    ok = (hi > lo) & (nl >= min_leaf) & (nr >= min_leaf)
    score = np.where(ok, score, -np.inf)
    best = score.max()
    if not np.isfinite(best):
        return -1, 0.0, -np.inf
    i = int(np.flatnonzero(score >= best - _kernels.TIE_EPS)[0])
    return int(feats[i]), float(thr[i]), float(score[i])


def train_tree(X, y, params: TreeParams = TreeParams(), sample_index=None) -> TreeModel:
    """Grow a classification tree greedily (depth-first, left child first).

    ``sample_index`` restricts training to those rows; repeated indices act
    as bootstrap duplicates.
    """
    X = as_matrix(X)
    y = as_classes(y)
    n, d = X.shape
    if n == 0 or y.shape[0] != n:
        raise ValueError("X and y must be non-empty and aligned")
    if d == 0:
        raise ValueError("need at least one feature")
    crit = _CRITERION_CODE[params.criterion]
    k = n_candidate_features(params.max_features, d)
    all_feats = np.arange(d, dtype=np.intp)
    b = _Builder()

    def grow(samples, depth):
        counts = np.bincount(y[samples], minlength=2).astype(np.float64)
        m = samples.shape[0]
        node = b.new_node((counts / m).tolist(), float(m))
        if (np.count_nonzero(counts) <= 1
                or (params.max_depth is not None and depth >= params.max_depth)
                or m < params.min_samples_split
                or m < 2 * params.min_samples_leaf):
            return node
        rng = node_rng(params.seed, node)
        feats = all_feats if k >= d else np.sort(rng.choice(d, size=k, replace=False)).astype(np.intp)
        if params.splitter == "best":
            f, thr, score = _kernels.best_split_classif(X, y, samples, feats, crit,
                                                        params.min_samples_leaf)
        else:
            f, thr, score = _random_split(X, y, samples, feats, rng, crit,
                                          params.min_samples_leaf)
        if f < 0 or score <= _kernels.TIE_EPS:
            return node
        go_left = X[samples, f] <= thr
        b.feature[node], b.threshold[node], b.score[node] = f, thr, score
        b.left[node] = grow(samples[go_left], depth + 1)
        b.right[node] = grow(samples[~go_left], depth + 1)
        return node

    root = np.arange(n, dtype=np.intp) if sample_index is None else np.sort(
        np.asarray(sample_index, dtype=np.intp))
    grow(root, 0)
    return b.finish(params, d)


def predict_tree(model: TreeModel, x):
    """Class index for one sample or an array of samples."""
    X = as_matrix(x)
    out = model.predict(X)
    return int(out[0]) if np.ndim(x) == 1 or hasattr(x, "indices") else out


def grow_regression_tree(X, g, h, samples, features, max_depth, reg_lambda, gamma,
                         min_child_weight) -> TreeModel:
    """Second-order boosting tree; leaf weight is -G / (H + lambda).

    A leaf whose hessian sum is below ``min_child_weight`` (only possible at
    the root) outputs 0.
    """
    b = _Builder()

    def leaf_weight(G, H):
        if H < min_child_weight or H <= 0.0:
            return 0.0
        return -G / (H + reg_lambda)

    def grow(samples, depth):
        G = float(np.cumsum(g[samples])[-1])
        H = float(np.cumsum(h[samples])[-1])
        node = b.new_node([leaf_weight(G, H)], H)
        if depth >= max_depth or samples.shape[0] < 2:
            return node
        f, thr, gain = _kernels.best_split_gbt(X, g, h, samples, features, reg_lambda,
                                               gamma, min_child_weight)
        if f < 0:
            return node
        go_left = X[samples, f] <= thr
        b.feature[node], b.threshold[node], b.score[node] = f, thr, gain
        b.left[node] = grow(samples[go_left], depth + 1)
        b.right[node] = grow(samples[~go_left], depth + 1)
        return node

    grow(samples, 0)
    return b.finish(None, X.shape[1])
