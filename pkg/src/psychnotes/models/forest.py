"""Random forest: bagged trees combined by hard majority vote."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import TreeModel, TreeParams, as_classes, as_matrix, train_tree


def tree_seeds(seed: int, n: int) -> list:
    """Independent 63-bit seeds for each tree, derived from the forest seed."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0] >> np.uint64(1)) for c in children]


def bootstrap_indices(seed: int, n: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=n)


@dataclass
class ForestModel:
    trees: list
    bootstrap: bool
    seeds: list
    params: TreeParams

    family = "forest"

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        if len({t.n_features for t in self.trees}) != 1:
            raise ValueError("trees disagree on feature dimension")

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def votes(self, X) -> np.ndarray:
        """(n_samples, 2) count of trees voting for each class."""
        X = as_matrix(X)
        ones = np.zeros(X.shape[0], dtype=np.intp)
        for t in self.trees:
            ones += t.predict(X)
        return np.column_stack([len(self.trees) - ones, ones])

    def predict(self, X) -> np.ndarray:
        v = self.votes(X)
        # class 1 only on a strict majority; a tie goes to class 0
        return (v[:, 1] > v[:, 0]).astype(np.intp)

    def decision_scores(self, X) -> np.ndarray:
        return self.votes(X)[:, 1] / len(self.trees)

    def to_payload(self) -> dict:
        return {"bootstrap": self.bootstrap, "seeds": list(self.seeds),
                "trees": [t.to_payload() for t in self.trees]}

    @classmethod
    def from_payload(cls, payload: dict, params: TreeParams) -> "ForestModel":
        seeds = list(payload["seeds"])
        trees = [TreeModel.from_payload(p, TreeParams.from_dict({**params.to_dict(), "seed": s}))
                 for p, s in zip(payload["trees"], seeds)]
        return cls(trees, bool(payload["bootstrap"]), seeds, params)


def train_forest(X, y, n_estimators: int = 100, tree_params: TreeParams = TreeParams(),
                 bootstrap: bool = True, seed: int = 0) -> ForestModel:
    """Tree i gets seed ``seeds[i]``; with bootstrap it also trains on n rows
    drawn with replacement under that seed. ``tree_params.seed`` is ignored.
    """
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    X = as_matrix(X)
    y = as_classes(y)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    seeds = tree_seeds(seed, n_estimators)
    trees = []
    for s in seeds:
        params = TreeParams.from_dict({**tree_params.to_dict(), "seed": s})
        rows = bootstrap_indices(s, n) if bootstrap else None
        trees.append(train_tree(X, y, params, sample_index=rows))
    return ForestModel(trees, bootstrap, seeds, tree_params)


def predict_forest(model: ForestModel, x):
    X = as_matrix(x)
    out = model.predict(X)
    return int(out[0]) if np.ndim(x) == 1 or hasattr(x, "indices") else out
