"""Grid search with stratified k-fold CV, evaluation metrics and timing tables."""
from __future__ import annotations

import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .corpus import Label
from .features import SparseVector, to_matrix
from .models import UnsupportedFamilyError, canonical_family, fit
from .models.tree import as_classes, as_matrix
from .resample import OVERSAMPLERS, oversample

METRICS = ("accuracy", "f1_weighted", "f1_macro")

# parameter names each family accepts in a grid file
FAMILY_PARAMS = {
    "tree": {"criterion", "splitter", "max_depth", "min_samples_split", "min_samples_leaf",
             "max_features", "min_weight_fraction_leaf", "random_state"},
    "forest": {"n_estimators", "max_features", "max_depth", "min_samples_split",
               "min_samples_leaf", "bootstrap", "criterion", "random_state"},
    "svm": {"C", "gamma", "kernel", "degree", "coef0", "tol", "max_passes", "max_iter",
            "random_state"},
    "gbt": {"objective", "learning_rate", "n_estimators", "min_child_weight", "gamma",
            "subsample", "colsample_bytree", "max_depth", "reg_lambda", "random_state"},
}


class GridError(ValueError):
    pass


# --- evaluation ---------------------------------------------------------------

def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _ratio(a: int, b: int) -> float:
    return 0.0 if b == 0 else a / b


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    """Binary evaluation with F41 as the positive class of the confusion matrix."""

    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    per_class: dict  # label code -> ClassScores
    macro_f1: float
    weighted_f1: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def binary_f1(self) -> float:
        return self.per_class[Label(0).code].f1

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "EvalReport":
        yt = as_classes(y_true)
        yp = as_classes(y_pred)
        if yt.shape != yp.shape:
            raise ValueError("prediction and truth lengths differ")
        if yt.size == 0:
            raise ValueError("cannot evaluate on an empty test set")
        pos = 0
        tp = int(np.sum((yt == pos) & (yp == pos)))
        fp = int(np.sum((yt != pos) & (yp == pos)))
        fn = int(np.sum((yt == pos) & (yp != pos)))
        tn = int(np.sum((yt != pos) & (yp != pos)))
        per_class = {}
        for lab in Label:
            c = int(lab)
            hit = int(np.sum((yt == c) & (yp == c)))
            support = int(np.sum(yt == c))
            p = _ratio(hit, int(np.sum(yp == c)))
            r = _ratio(hit, support)
            per_class[lab.code] = ClassScores(p, r, _f1(p, r), support)
        n = int(yt.size)
        macro = math.fsum(s.f1 for s in per_class.values()) / len(per_class)
        weighted = math.fsum(s.support / n * s.f1 for s in per_class.values())
        return cls(tp, fp, fn, tn, (tp + tn) / n, per_class, macro, weighted)

    def metric(self, name: str) -> float:
        if name == "accuracy":
            return self.accuracy
        if name == "f1_weighted":
            return self.weighted_f1
        if name == "f1_macro":
            return self.macro_f1
        raise ValueError(f"unknown metric {name!r}")

    def to_dict(self) -> dict:
        return {
            "positive_class": Label(0).code,
            "confusion_matrix": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "accuracy": self.accuracy,
            "per_class": {k: vars(v) for k, v in self.per_class.items()},
            "f1_binary": self.binary_f1,
            "f1_macro": self.macro_f1,
            "f1_weighted": self.weighted_f1,
        }


def evaluate(model, X, y) -> EvalReport:
    X = as_matrix(X)
    if X.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty test set")
    return EvalReport.from_predictions(y, model.predict(X))


# --- grids --------------------------------------------------------------------

@dataclass(frozen=True)
class SearchGrid:
    family: str
    params: dict  # name -> list of values, in declared order

    def __post_init__(self):
        fam = canonical_family(self.family)
        unknown = set(self.params) - FAMILY_PARAMS[fam]
        if unknown:
            raise GridError(f"{self.family}: unknown parameters {sorted(unknown)}")
        for name, values in self.params.items():
            if not isinstance(values, list) or not values:
                raise GridError(f"{self.family}: parameter {name!r} needs a non-empty list")

    @property
    def total_combinations(self) -> int:
        return math.prod(len(v) for v in self.params.values())

    def combinations(self):
        """Configurations in lexicographic order (last parameter varies fastest)."""
        names = list(self.params)
        for values in itertools.product(*(self.params[n] for n in names)):
            yield dict(zip(names, values))

    def to_json(self) -> dict:
        return {"family": self.family, "params": self.params}


def parse_grid(obj: dict) -> SearchGrid:
    if not isinstance(obj, dict) or "family" not in obj or "params" not in obj:
        raise GridError('grid must be an object with "family" and "params"')
    if obj.get("unsupported"):
        raise UnsupportedFamilyError(f"unsupported family {obj['family']!r}: "
                                     "transformer models are not implemented")
    return SearchGrid(obj["family"], dict(obj["params"]))


def load_grid(path) -> SearchGrid:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GridError(f"{path}: invalid JSON: {exc}") from exc
    return parse_grid(obj)


def bundled_grid(name: str) -> SearchGrid:
    """Load ``data/grids/<name>.json`` shipped with the package."""
    text = resources.files("psychnotes").joinpath("data", "grids", f"{name}.json").read_text(
        encoding="utf-8")
    return parse_grid(json.loads(text))


def bundled_grid_names() -> list:
    root = resources.files("psychnotes").joinpath("data", "grids")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


# --- cross-validation ---------------------------------------------------------

def kfold_indices(labels, k: int = 3, seed: int = 0) -> list:
    """Stratified folds: each class is shuffled, then dealt round-robin.

    The dealing position carries over from one class to the next, which keeps
    fold sizes within one of each other.
    """
    labels = list(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes = sorted(set(labels))
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    pos = 0
    for cls in classes:
        members = np.array([i for i, lab in enumerate(labels) if lab == cls])
        if len(members) < k:
            raise ValueError(f"class {cls!r} has {len(members)} members, fewer than k={k}")
        rng.shuffle(members)
        for i in members.tolist():
            folds[pos % k].append(i)
            pos += 1
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


@dataclass
class CvResult:
    ordinal: int
    config: dict
    fold_scores: dict  # metric -> list of per-fold values
    mean: dict
    std: dict
    seconds: float
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {"ordinal": self.ordinal, "config": self.config, "fold_scores": self.fold_scores,
                "mean": self.mean, "std": self.std, "seconds": self.seconds, "error": self.error}


@dataclass
class SearchResult:
    family: str
    results: list
    best_ordinal: Optional[int]
    select_metric: str
    oversampler: str
    k: int
    seed: int

    @property
    def best(self) -> Optional[CvResult]:
        return None if self.best_ordinal is None else self.results[self.best_ordinal]

    @property
    def total_seconds(self) -> float:
        return math.fsum(r.seconds for r in self.results)

    def to_dict(self, include_timing: bool = True) -> dict:
        rows = []
        for r in self.results:
            d = r.to_dict()
            if not include_timing:
                d.pop("seconds")
            rows.append(d)
        return {"family": self.family, "k": self.k, "seed": self.seed,
                "select_metric": self.select_metric, "oversampler": self.oversampler,
                "combinations": len(self.results), "best_ordinal": self.best_ordinal,
                "results": rows}


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, fold]).generate_state(1)[0])


@dataclass
class _FoldData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray


def _oversample_dense(name: str, X: np.ndarray, y: np.ndarray, seed: int):
    if name == "none":
        return X, y
    vecs = [SparseVector.from_dense(row) for row in X]
    res = oversample(name, vecs, y.tolist(), seed)
    return to_matrix(list(res.vectors), X.shape[1]), np.asarray(res.labels, dtype=np.intp)


def prepare_folds(X, y, k: int, seed: int, oversampler: str = "none") -> list:
    """Split into k stratified folds; the oversampler touches training folds only."""
    if oversampler not in OVERSAMPLERS:
        raise ValueError(f"unknown oversampler {oversampler!r}")
    X = as_matrix(X)
    y = as_classes(y)
    folds = kfold_indices(y.tolist(), k, seed)
    out = []
    for f, val in enumerate(folds):
        train = np.setdiff1d(np.arange(len(y)), val)
        Xt, yt = _oversample_dense(oversampler, X[train], y[train], _fold_seed(seed, f))
        out.append(_FoldData(Xt, yt, X[val], y[val]))
    return out


# worker-process state, set once per pool by _init_worker
_STATE: dict = {}


def _init_worker(family, folds, seed, scorer):
    _STATE.update(family=family, folds=folds, seed=seed, scorer=scorer)


def default_scorer(family: str, config: dict, fold: _FoldData, seed: int) -> dict:
    model = fit(family, fold.X_train, fold.y_train, config, seed)
    rep = evaluate(model, fold.X_val, fold.y_val)
    return {m: rep.metric(m) for m in METRICS}


def _run_config(args) -> CvResult:
    ordinal, config = args
    family, folds, seed = _STATE["family"], _STATE["folds"], _STATE["seed"]
    scorer = _STATE["scorer"] or default_scorer
    t0 = time.perf_counter()
    try:
        per_fold = [scorer(family, config, fold, seed) for fold in folds]
    except Exception as exc:  # a failing configuration is recorded, not fatal
        return CvResult(ordinal, config, {}, {}, {}, time.perf_counter() - t0,
                        f"{type(exc).__name__}: {exc}")
    seconds = time.perf_counter() - t0
    scores = {m: [float(s[m]) for s in per_fold] for m in per_fold[0]}
    mean = {m: math.fsum(v) / len(v) for m, v in scores.items()}
    std = {m: float(np.std(v)) for m, v in scores.items()}
    return CvResult(ordinal, config, scores, mean, std, seconds)


def select_best(results: Sequence[CvResult], metric: str) -> Optional[int]:
    """Ordinal of the best mean ``metric``; ties go to the lower ordinal."""
    best, best_val = None, -math.inf
    for r in results:
        if r.ok and metric in r.mean and r.mean[metric] > best_val:
            best, best_val = r.ordinal, r.mean[metric]
    return best


def grid_search(family: str, grid: SearchGrid, X, y, k: int = 3, seed: int = 0,
                select_metric: str = "accuracy", oversampler: str = "none", jobs: int = 1,
                scorer: Optional[Callable] = None, progress: Optional[Callable] = None
                ) -> SearchResult:
    """Score every grid configuration by k-fold CV and pick the best.

    Every configuration sees the same folds and the same seed, so results do
    not depend on ``jobs``. ``scorer(family, config, fold, seed) -> {metric: value}``
    replaces model fitting (tests use a stub).
    """
    if select_metric not in METRICS:
        raise ValueError(f"unknown select metric {select_metric!r}")
    family = canonical_family(family)
    if canonical_family(grid.family) != family:
        raise GridError(f"grid is for {grid.family!r}, not {family!r}")
    if grid.total_combinations == 0:
        raise GridError("empty grid")
    folds = prepare_folds(X, y, k, seed, oversampler)
    work = list(enumerate(grid.combinations()))
    if jobs <= 1:
        _init_worker(family, folds, seed, scorer)
        results = []
        for item in work:
            results.append(_run_config(item))
            if progress:
                progress(len(results), len(work))
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(family, folds, seed, scorer)) as pool:
            results = list(pool.map(_run_config, work, chunksize=max(1, len(work) // (jobs * 8))))
    results.sort(key=lambda r: r.ordinal)
    return SearchResult(family, results, select_best(results, select_metric), select_metric,
                        oversampler, k, seed)


# --- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class TimingRow:
    family: str
    combinations: int
    total_seconds: float

    @property
    def seconds_per_combination(self) -> float:
        return self.total_seconds / self.combinations if self.combinations else 0.0


@dataclass
class TimingTable:
    rows: list = field(default_factory=list)

    def render(self) -> str:
        head = ("Model", "Combinations", "Time (s)", "Time/Combination")
        body = [(r.family, str(r.combinations), f"{r.total_seconds:.3f}",
                 f"{r.seconds_per_combination:.3f}") for r in self.rows]
        return _render_table(head, body)

    def to_json(self) -> list:
        return [{"family": r.family, "combinations": r.combinations,
                 "total_seconds": r.total_seconds,
                 "seconds_per_combination": r.seconds_per_combination} for r in self.rows]


def timing_report(results) -> TimingTable:
    """``results`` maps family -> list of CvResult (or is a list of SearchResult)."""
    if isinstance(results, dict):
        groups = list(results.items())
    else:
        groups = [(s.family, s.results) for s in results]
    return TimingTable([TimingRow(fam, len(rs), math.fsum(r.seconds for r in rs))
                        for fam, rs in groups])


FAMILY_TITLES = {"forest": "Rand.Forest", "svm": "SVC", "tree": "Dec.Tree", "gbt": "XGB"}
EXPERIMENT_TITLES = {"none": "WO", "random": "RO", "smote": "SMOTE"}


def performance_table(reports: dict) -> str:
    """Experiments x metrics rows, one column per family.

    ``reports`` maps (oversampler, family) -> EvalReport; F1 is the weighted F1.
    """
    families = [f for f in FAMILY_TITLES if any(fam == f for _, fam in reports)]
    exps = [e for e in EXPERIMENT_TITLES if any(ex == e for ex, _ in reports)]
    head = ("Exp", "Metric") + tuple(FAMILY_TITLES[f] for f in families)
    body = []
    for e in exps:
        for i, (title, attr) in enumerate((("Accuracy", "accuracy"), ("F1-Score", "weighted_f1"))):
            cells = []
            for f in families:
                rep = reports.get((e, f))
                cells.append("-" if rep is None else f"{getattr(rep, attr):.2f}")
            body.append((EXPERIMENT_TITLES[e] if i == 0 else "", title, *cells))
    return _render_table(head, body)


def _render_table(head, body) -> str:
    widths = [max(len(str(row[i])) for row in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip()
             for row in [head, *body]]
    return "\n".join(lines) + "\n"
