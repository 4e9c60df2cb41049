"""Shared estimator plumbing: validation, registry, JSON serialization."""

from __future__ import annotations

import json

import numpy as np

MODEL_FORMAT = "ramanclf-mlmodel"
MODEL_VERSION = 1


class NotFittedError(RuntimeError):
    pass


def check_xy(X, y=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    if y is None:
        return X
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError(f"X has {X.shape[0]} rows but y has {len(y)} labels")
    if y.min() < 0:
        raise ValueError("labels must be non-negative integers")
    return X, y


def n_classes_of(y, n_classes=None):
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if k < 2:
        raise ValueError("need at least two classes")
    return k


class Classifier:
    """Base for the classical models: ``fit`` returns self, ``predict`` labels."""

    kind = ""

    def __init__(self, **hyperparams):
        self.hyperparams = hyperparams
        self.n_classes = None

    def _check_fitted(self):
        if self.n_classes is None:
            raise NotFittedError(f"{self.kind} model is not fitted")

    def fit(self, X, y, n_classes=None):
        raise NotImplementedError

    def predict(self, X):
        raise NotImplementedError

    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError

    def to_json(self) -> str:
        self._check_fitted()
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind,
            "hyperparams": self.hyperparams,
            "n_classes": self.n_classes,
            "state": _encode(self.get_state()),
        }
        return json.dumps(doc)

    def __repr__(self):
        hp = ", ".join(f"{k}={v!r}" for k, v in self.hyperparams.items())
        return f"{type(self).__name__}({hp})"


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def from_json(text: str) -> Classifier:
    from . import make_model

    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a serialized classical model")
    if doc["version"] > MODEL_VERSION:
        raise ValueError(f"model version {doc['version']} is newer than supported")
    model = make_model(doc["kind"], **doc["hyperparams"])
    model.set_state(_decode(doc["state"]))
    model.n_classes = int(doc["n_classes"])
    return model
