"""Classical classifiers (KNN, CART, random forest, Gaussian NB, SVM) and PCA."""

from __future__ import annotations

import csv
import itertools
from pathlib import Path

import numpy as np

from ..core import SpectraDataset, evaluate, stratified_split
from .base import Classifier, NotFittedError, check_xy, from_json
from .bayes import GaussianNB
from .neighbors import KNN, minkowski
from .pca import PcaModel, pca_fit, pca_inverse, pca_transform, reconstruction_error
from .svm import SVM, kernel_matrix, smo
from .tree import DecisionTree, RandomForest

MODELS = {"knn": KNN, "dtree": DecisionTree, "rforest": RandomForest, "gnb": GaussianNB, "svm": SVM}
ML_KINDS = tuple(MODELS)

# Settings used by the experiments unless a plan overrides them. The SVM
# kernel/penalty is the winner of a charge_mimic grid search.
DEFAULT_HYPERPARAMS = {
    "knn": {"n_neighbors": 5, "p": 2.0},
    "dtree": {"min_leaf": 1, "min_split": 2},
    "rforest": {"n_estimators": 100, "max_depth": None},
    "gnb": {"var_smoothing": 1e-9},
    "svm": {"C": 100.0, "kernel": "rbf"},
}


def make_model(kind: str, **hyperparams) -> Classifier:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {ML_KINDS}") from None
    return cls(**hyperparams)


def default_model(kind: str, seed: int = 0, **overrides) -> Classifier:
    hp = dict(DEFAULT_HYPERPARAMS.get(kind, {}))
    hp.update(overrides)
    if kind in ("dtree", "rforest"):
        hp.setdefault("seed", seed)
    return make_model(kind, **hp)


def fit(model: Classifier, X, y, n_classes=None) -> Classifier:
    return model.fit(X, y, n_classes)


def predict(model: Classifier, X) -> np.ndarray:
    return model.predict(X)


def grid_search(kind: str, grid: dict, d: SpectraDataset, seed: int, fractions=(0.8, 0.2)) -> list[dict]:
    """Accuracy of every hyperparameter combination on one stratified split.

    ``grid`` maps hyperparameter names to lists of values; rows follow the
    itertools.product order of the grid's keys. A cell whose fit fails gets
    accuracy NaN and the error message instead of aborting the search.
    """
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("grid must have at least one value per hyperparameter")
    split = stratified_split(d, fractions, seed)
    Xtr, ytr = d.rows[split.train], d.labels[split.train]
    Xte, yte = d.rows[split.test], d.labels[split.test]
    keys = list(grid)
    rows = []
    for values in itertools.product(*(grid[k] for k in keys)):
        hp = dict(zip(keys, values))
        row = dict(hp)
        try:
            if kind in ("dtree", "rforest"):
                hp.setdefault("seed", seed)
            m = make_model(kind, **hp).fit(Xtr, ytr, d.n_classes)
            row["accuracy"] = evaluate(m.predict(Xte), yte, d.n_classes).accuracy
            row["error"] = ""
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            row["accuracy"] = float("nan")
            row["error"] = f"{type(e).__name__}: {e}"
        rows.append(row)
    return rows


def best_row(rows: list[dict]) -> dict | None:
    """Highest-accuracy row; the first one wins on ties."""
    best = None
    for r in rows:
        a = r["accuracy"]
        if a == a and (best is None or a > best["accuracy"]):
            best = r
    return best


def write_grid_csv(rows: list[dict], path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    keys = [k for k in rows[0] if k not in ("accuracy", "error")]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys + ["accuracy", "error"])
        for r in rows:
            acc = r["accuracy"]
            w.writerow([r[k] for k in keys] + ["" if acc != acc else repr(float(acc)), r["error"]])


__all__ = [
    "Classifier", "NotFittedError", "check_xy", "from_json", "GaussianNB", "KNN", "minkowski",
    "PcaModel", "pca_fit", "pca_transform", "pca_inverse", "reconstruction_error", "SVM",
    "kernel_matrix", "smo", "DecisionTree", "RandomForest", "MODELS", "ML_KINDS",
    "DEFAULT_HYPERPARAMS", "make_model", "default_model", "fit", "predict", "grid_search",
    "best_row", "write_grid_csv",
]
