"""Principal component analysis via SVD of the centred data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, n_bins), orthonormal rows
    explained_variance_ratio: np.ndarray
    singular_values: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)


def pca_fit(X, n_components: int) -> PcaModel:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    n, p = X.shape
    if not 1 <= n_components <= min(n, p):
        raise ValueError(f"n_components={n_components} must be in [1, {min(n, p)}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    # sign convention: the largest-magnitude loading of each component is positive
    big = np.argmax(np.abs(vt), axis=1)
    vt = vt * np.sign(vt[np.arange(len(vt)), big])[:, None]
    var = s**2
    total = var.sum()
    ratio = var / total if total > 0 else np.zeros_like(var)
    return PcaModel(mean, vt[:n_components].copy(), ratio[:n_components].copy(), s[:n_components].copy())


def pca_transform(m: PcaModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return (X - m.mean) @ m.components.T


def pca_inverse(m: PcaModel, Z) -> np.ndarray:
    return np.asarray(Z, dtype=float) @ m.components + m.mean


def reconstruction_error(m: PcaModel, X) -> float:
    """Mean squared residual after projecting and mapping back."""
    X = np.asarray(X, dtype=float)
    return float(np.mean((X - pca_inverse(m, pca_transform(m, X))) ** 2))
