"""Kernel SVM trained by SMO, one-vs-rest for more than two classes."""

from __future__ import annotations

import numpy as np

from .base import Classifier, check_xy, n_classes_of

KERNELS = ("linear", "rbf", "poly")
TAU = 1e-12


def kernel_matrix(A, B, kernel, gamma, degree=3, coef0=1.0):
    dot = A @ B.T
    if kernel == "linear":
        return dot
    if kernel == "poly":
        return (gamma * dot + coef0) ** degree
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * dot
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo(K, y, C, tol=1e-3, max_iter=None):
    """Solve the binary dual for labels y in {-1, +1} given a kernel matrix.

    Working pairs follow the LIBSVM scheme: ``i`` is the maximal KKT violator,
    ``j`` is picked by second-order gain. Stops when the violation gap
    m(a) - M(a) drops below ``tol``.

    Returns (alpha, bias, gap, iterations).
    """
    n = len(y)
    y = y.astype(float)
    max_iter = 1000 * n if max_iter is None else max_iter
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    diag = np.diag(K).copy()
    pos, neg = y > 0, y < 0
    it = 0
    gap = np.inf
    while it < max_iter:
        vals = -y * grad
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        if not up.any() or not low.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up, vals, -np.inf)))
        m_val = vals[i]
        gap = m_val - np.min(np.where(low, vals, np.inf))
        if gap < tol:
            break
        b = m_val - vals
        cand = low & (b > 0)
        a = np.maximum(diag[i] + diag - 2.0 * K[i], TAU)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))
        # move a_i by +y_i t and a_j by -y_j t, keeping y'a fixed
        t = b[j] / a[j]
        t = min(t, C - alpha[i] if y[i] > 0 else alpha[i])
        t = min(t, alpha[j] if y[j] > 0 else C - alpha[j])
        di, dj = y[i] * t, -y[j] * t
        alpha[i] += di
        alpha[j] += dj
        # snap to the box so set membership is exact
        for k in (i, j):
            if alpha[k] < 1e-12 * C:
                alpha[k] = 0.0
            elif alpha[k] > C * (1 - 1e-12):
                alpha[k] = C
        grad += y * (y[i] * K[:, i] * di + y[j] * K[:, j] * dj)
        it += 1
    vals = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = float(vals[free].mean())
    else:
        up = (pos & (alpha < C)) | (neg & (alpha > 0))
        low = (pos & (alpha > 0)) | (neg & (alpha < C))
        hi = vals[up].max() if up.any() else vals.max()
        lo = vals[low].min() if low.any() else vals.min()
        bias = 0.5 * float(hi + lo)
    return alpha, bias, float(gap), it


class SVM(Classifier):
    """Soft-margin kernel SVM.

    Two classes train one machine (class 1 positive); more train one machine
    per class against the rest and predict the largest decision value.
    ``gamma="scale"`` means 1 / (n_features * var(X)).
    """

    kind = "svm"

    def __init__(self, C=1.0, kernel="rbf", gamma="scale", degree=3, coef0=1.0, tol=1e-3,
                 max_passes=1000):
        if C <= 0:
            raise ValueError("C must be positive")
        if kernel not in KERNELS:
            raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
        if gamma != "scale" and float(gamma) <= 0:
            raise ValueError("gamma must be positive or 'scale'")
        super().__init__(C=float(C), kernel=kernel, gamma=gamma if gamma == "scale" else float(gamma),
                         degree=int(degree), coef0=float(coef0), tol=float(tol),
                         max_passes=int(max_passes))

    def _kernel(self, A, B):
        hp = self.hyperparams
        return kernel_matrix(A, B, hp["kernel"], self.gamma_, hp["degree"], hp["coef0"])

    def fit(self, X, y, n_classes=None):
        X, y = check_xy(X, y)
        k = n_classes_of(y, n_classes)
        hp = self.hyperparams
        if hp["gamma"] == "scale":
            v = float(X.var())
            self.gamma_ = 1.0 / (X.shape[1] * v) if v > 0 else 1.0
        else:
            self.gamma_ = hp["gamma"]
        K = self._kernel(X, X)
        targets = [1] if k == 2 else list(range(k))
        coefs, biases, self.kkt_gap_, self.iterations_ = [], [], [], []
        for c in targets:
            yb = np.where(y == c, 1.0, -1.0)
            a, b, gap, it = smo(K, yb, hp["C"], hp["tol"], hp["max_passes"] * len(y))
            coefs.append(a * yb)
            biases.append(b)
            self.kkt_gap_.append(gap)
            self.iterations_.append(it)
        coef = np.stack(coefs, axis=1)
        sv = np.flatnonzero(np.any(coef != 0, axis=1))
        self.support_ = sv
        self.sv_X_ = X[sv]
        self.dual_coef_ = coef[sv]
        self.intercept_ = np.array(biases)
        self.n_classes = k
        return self

    def decision_function(self, X):
        """(n, 1) for two classes, (n, K) otherwise."""
        self._check_fitted()
        X = check_xy(X)
        if len(self.sv_X_) == 0:
            return np.tile(self.intercept_, (len(X), 1))
        return self._kernel(X, self.sv_X_) @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        f = self.decision_function(X)
        if self.n_classes == 2:
            return (f[:, 0] > 0).astype(np.int64)
        return f.argmax(axis=1)

    def max_kkt_violation(self):
        self._check_fitted()
        return float(max(self.kkt_gap_))

    def linear_weights(self):
        """Primal weights (n_features, n_machines); linear kernel only."""
        self._check_fitted()
        if self.hyperparams["kernel"] != "linear":
            raise ValueError("primal weights exist only for the linear kernel")
        return self.sv_X_.T @ self.dual_coef_

    def get_state(self):
        return {"gamma": self.gamma_, "support": self.support_, "sv_X": self.sv_X_,
                "dual_coef": self.dual_coef_, "intercept": self.intercept_,
                "kkt_gap": list(self.kkt_gap_)}

    def set_state(self, state):
        self.gamma_ = float(state["gamma"])
        self.support_ = np.asarray(state["support"], np.int64)
        self.sv_X_ = np.asarray(state["sv_X"], float).reshape(len(self.support_), -1)
        self.dual_coef_ = np.asarray(state["dual_coef"], float).reshape(len(self.support_), -1)
        self.intercept_ = np.asarray(state["intercept"], float)
        self.kkt_gap_ = list(state["kkt_gap"])
