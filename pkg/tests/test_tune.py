import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from psychnotes.models import UnsupportedFamilyError
from psychnotes.tune import (CvResult, EvalReport, GridError, SearchGrid, bundled_grid,
                             grid_search, kfold_indices, load_grid, parse_grid,
                             performance_table, prepare_folds, select_best, timing_report)


# --- evaluation ---------------------------------------------------------------

def test_perfect_predictions():
    y = [0, 1, 1, 0, 1]
    rep = EvalReport.from_predictions(y, y)
    assert rep.accuracy == 1.0 and rep.macro_f1 == 1.0 and rep.weighted_f1 == 1.0


def test_constant_majority_predictions():
    y = [1] * 82 + [0] * 146
    rep = EvalReport.from_predictions(y, [0] * 228)
    assert rep.accuracy == pytest.approx(146 / 228) and round(rep.accuracy, 3) == 0.640
    assert rep.per_class["F43"].f1 == 0.0 and rep.per_class["F43"].precision == 0.0


def test_confusion_matrix_example():
    # F41 is class 0 and the positive class
    y_true = [0] * 40 + [1] * 5 + [0] * 4 + [1] * 20
    y_pred = [0] * 40 + [0] * 5 + [1] * 4 + [1] * 20
    rep = EvalReport.from_predictions(y_true, y_pred)
    assert (rep.tp, rep.fp, rep.fn, rep.tn) == (40, 5, 4, 20)
    f41 = rep.per_class["F41"]
    assert f41.precision == pytest.approx(0.889, abs=5e-4)
    assert f41.recall == pytest.approx(0.909, abs=5e-4)
    assert f41.f1 == pytest.approx(0.899, abs=5e-4)
    assert rep.binary_f1 == f41.f1
    d = rep.to_dict()
    assert d["positive_class"] == "F41" and d["confusion_matrix"]["fp"] == 5


def test_evaluation_errors():
    with pytest.raises(ValueError):
        EvalReport.from_predictions([], [])
    with pytest.raises(ValueError):
        EvalReport.from_predictions([0, 1], [0])
    with pytest.raises(ValueError):
        EvalReport.from_predictions([0], [0]).metric("auc")


# --- folds --------------------------------------------------------------------

def test_kfold_small():
    folds = kfold_indices([0, 0, 0, 1, 1, 1], 3, seed=0)
    assert [len(f) for f in folds] == [2, 2, 2]
    assert all(Counter(np.array([0, 0, 0, 1, 1, 1])[f].tolist()) == {0: 1, 1: 1} for f in folds)


@given(st.lists(st.integers(0, 1), min_size=6, max_size=80), st.integers(2, 5),
       st.integers(0, 1000))
def test_kfold_partition(labels, k, seed):
    counts = Counter(labels)
    if min(counts.values()) < k:
        with pytest.raises(ValueError):
            kfold_indices(labels, k, seed)
        return
    folds = kfold_indices(labels, k, seed)
    assert sorted(np.concatenate(folds).tolist()) == list(range(len(labels)))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    for c, n in counts.items():
        per = [sum(labels[i] == c for i in f) for f in folds]
        assert max(per) - min(per) <= 1 and sum(per) == n


def test_kfold_training_split_counts():
    labels = [1] * 57 + [0] * 102
    folds = kfold_indices(labels, 3, seed=0)
    for f in folds:
        assert Counter(labels[i] for i in f) == {0: 34, 1: 19}


def test_oversampling_stays_inside_training_folds():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(30, 3))
    y = np.array([1] * 9 + [0] * 21)
    for fold in prepare_folds(X, y, 3, 0, "smote"):
        assert Counter(fold.y_train.tolist())[0] == Counter(fold.y_train.tolist())[1]
        assert len(fold.y_val) == 10
        # validation rows are original rows, untouched
        assert all(any(np.array_equal(v, x) for x in X) for v in fold.X_val)


# --- grids --------------------------------------------------------------------

def _stub(table):
    def scorer(family, config, fold, seed):
        return {"accuracy": table[(config["max_depth"], config["criterion"])],
                "f1_weighted": 0.5, "f1_macro": 0.5}
    return scorer


def _toy():
    return np.arange(12, dtype=float).reshape(6, 2), np.array([0, 1] * 3)


def test_two_by_two_grid_argmax():
    grid = SearchGrid("decision_tree", {"max_depth": [1, 2], "criterion": ["gini", "entropy"]})
    assert [tuple(c.values()) for c in grid.combinations()] == [
        (1, "gini"), (1, "entropy"), (2, "gini"), (2, "entropy")]
    table = {(1, "gini"): 0.6, (1, "entropy"): 0.7, (2, "gini"): 0.9, (2, "entropy"): 0.8}
    res = grid_search("decision_tree", grid, *_toy(), k=3, scorer=_stub(table))
    assert res.best.config == {"max_depth": 2, "criterion": "gini"}
    assert res.best.mean["accuracy"] == pytest.approx(0.9)


def test_ties_go_to_lower_ordinal():
    grid = SearchGrid("decision_tree", {"max_depth": [1, 2], "criterion": ["gini", "entropy"]})
    table = {(1, "gini"): 0.6, (1, "entropy"): 0.8, (2, "gini"): 0.8, (2, "entropy"): 0.8}
    res = grid_search("decision_tree", grid, *_toy(), k=3, scorer=_stub(table))
    assert res.best_ordinal == 1


def test_failing_config_is_recorded():
    grid = SearchGrid("decision_tree", {"max_depth": [2], "criterion": ["gini", "mse"]})
    X = np.random.default_rng(0).normal(size=(12, 2))
    res = grid_search("decision_tree", grid, X, np.array([0, 1] * 6), k=3)
    assert res.results[0].ok and not res.results[1].ok
    assert "mse" in res.results[1].error and res.best_ordinal == 0


def test_select_metric_changes_only_selection():
    a = CvResult(0, {}, {}, {"accuracy": 0.9, "f1_macro": 0.6}, {}, 0.0)
    b = CvResult(1, {}, {}, {"accuracy": 0.8, "f1_macro": 0.7}, {}, 0.0)
    assert select_best([a, b], "accuracy") == 0 and select_best([a, b], "f1_macro") == 1
    assert select_best([CvResult(0, {}, {}, {}, {}, 0.0, "boom")], "accuracy") is None


def test_grid_counts():
    assert bundled_grid("random_forest").total_combinations == 1080
    assert bundled_grid("svm").total_combinations == 192
    assert bundled_grid("decision_tree").total_combinations == 188442
    assert bundled_grid("xgboost").total_combinations == 11664


def test_grid_errors(tmp_path):
    with pytest.raises(GridError):
        parse_grid({"family": "svm"})
    with pytest.raises(GridError, match="unknown parameters"):
        parse_grid({"family": "svm", "params": {"depth": [1]}})
    with pytest.raises(GridError, match="non-empty list"):
        parse_grid({"family": "svm", "params": {"C": []}})
    for name in ("distilbert", "scibert"):
        with pytest.raises(UnsupportedFamilyError):
            bundled_grid(name)
    bad = tmp_path / "g.json"
    bad.write_text("{nope")
    with pytest.raises(GridError, match="invalid JSON"):
        load_grid(bad)
    bad.write_text(json.dumps({"family": "svm", "params": {"C": [1.0]}}))
    assert load_grid(bad).total_combinations == 1


# --- reports ------------------------------------------------------------------

def test_timing_ratio():
    rows = [CvResult(i, {}, {}, {}, {}, 985.267 / 1080) for i in range(1080)]
    table = timing_report({"random_forest": rows})
    row = table.rows[0]
    assert row.combinations == 1080 and row.total_seconds == pytest.approx(985.267)
    assert round(row.seconds_per_combination, 3) == 0.912
    assert row.seconds_per_combination * row.combinations == pytest.approx(row.total_seconds)
    assert "0.912" in table.render()


def test_performance_table_layout():
    good = EvalReport.from_predictions([0, 1, 1, 0], [0, 1, 1, 0])
    half = EvalReport.from_predictions([0, 1, 1, 0], [0, 0, 1, 1])
    text = performance_table({("none", "tree"): good, ("smote", "tree"): half,
                              ("none", "gbt"): half})
    lines = text.splitlines()
    assert lines[0].split() == ["Exp", "Metric", "Dec.Tree", "XGB"]
    assert lines[1].split() == ["WO", "Accuracy", "1.00", "0.50"]
    assert lines[2].split() == ["F1-Score", "1.00", "0.50"]
    assert lines[3].split() == ["SMOTE", "Accuracy", "0.50", "-"]
