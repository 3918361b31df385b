"""The four classifiers and a uniform entry point for training by family name."""
from __future__ import annotations

from .forest import ForestModel, predict_forest, train_forest
from .gbt import GbtModel, GbtParams, logistic_grad_hess, predict_gbt, train_gbt
from .impurity import ClassDistribution, gini, impurity
from .io import ModelFileError, load_model, loads_model, dumps_model, save_model
from .svm import SvmModel, SvmParams, decision_function, kernel, train_svm
from .tree import TreeModel, TreeParams, predict_tree, train_tree

# grid-file family names and the short names used in model files
FAMILY_ALIASES = {
    "decision_tree": "tree",
    "tree": "tree",
    "random_forest": "forest",
    "forest": "forest",
    "svm": "svm",
    "xgboost": "gbt",
    "gbt": "gbt",
}
UNSUPPORTED_FAMILIES = ("distilbert", "scibert")

_TREE_KEYS = ("criterion", "splitter", "max_depth", "min_samples_split", "min_samples_leaf",
              "max_features", "min_weight_fraction_leaf", "random_state", "seed")


class UnsupportedFamilyError(ValueError):
    pass


def canonical_family(name: str) -> str:
    key = name.lower()
    if key in UNSUPPORTED_FAMILIES:
        raise UnsupportedFamilyError(f"unsupported family {name!r}: transformer models are not implemented")
    if key not in FAMILY_ALIASES:
        raise UnsupportedFamilyError(f"unknown model family {name!r}")
    return FAMILY_ALIASES[key]


def fit(family: str, X, y, params: dict | None = None, seed: int = 0):
    """Train ``family`` with hyperparameters ``params`` (grid-file spelling).

    ``seed`` is used unless the params carry their own ``random_state``/``seed``.
    """
    family = canonical_family(family)
    p = dict(params or {})
    if "random_state" not in p and "seed" not in p:
        p["seed"] = seed
    if family == "tree":
        return train_tree(X, y, TreeParams.from_dict(p))
    if family == "forest":
        tree_p = {k: p.pop(k) for k in list(p) if k in _TREE_KEYS}
        forest_seed = tree_p.pop("seed", tree_p.pop("random_state", seed))
        n_estimators = int(p.pop("n_estimators", 100))
        bootstrap = bool(p.pop("bootstrap", True))
        if p:
            raise ValueError(f"unknown random_forest parameters {sorted(p)}")
        tree_p.setdefault("max_features", "sqrt")
        return train_forest(X, y, n_estimators, TreeParams.from_dict(tree_p), bootstrap,
                            forest_seed)
    if family == "svm":
        return train_svm(X, y, SvmParams.from_dict(p))
    return train_gbt(X, y, GbtParams.from_dict(p))


__all__ = [
    "ClassDistribution", "FAMILY_ALIASES", "ForestModel", "GbtModel", "GbtParams",
    "ModelFileError", "SvmModel", "SvmParams", "TreeModel", "TreeParams",
    "UnsupportedFamilyError", "canonical_family", "decision_function", "dumps_model", "fit",
    "gini", "impurity", "kernel", "load_model", "loads_model", "logistic_grad_hess",
    "predict_forest", "predict_gbt", "predict_tree", "save_model", "train_forest",
    "train_gbt", "train_svm", "train_tree",
]
