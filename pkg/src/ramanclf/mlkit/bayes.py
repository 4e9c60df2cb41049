import numpy as np

from .base import Classifier, check_xy, n_classes_of


class GaussianNB(Classifier):
    """Gaussian naive Bayes.

    Each class variance is inflated by ``var_smoothing * max(feature variances)``
    so that flat features (zero variance within a class) stay usable.
    """

    kind = "gnb"

    def __init__(self, var_smoothing=1e-9):
        if var_smoothing < 0:
            raise ValueError("var_smoothing must be >= 0")
        super().__init__(var_smoothing=float(var_smoothing))

    def fit(self, X, y, n_classes=None):
        X, y = check_xy(X, y)
        k = self.n_classes = n_classes_of(y, n_classes)
        eps = self.hyperparams["var_smoothing"] * float(np.var(X, axis=0).max())
        self.theta_ = np.zeros((k, X.shape[1]))
        self.var_ = np.ones((k, X.shape[1]))
        counts = np.bincount(y, minlength=k)
        for c in range(k):
            if counts[c]:
                Xc = X[y == c]
                self.theta_[c] = Xc.mean(axis=0)
                self.var_[c] = Xc.var(axis=0)
        self.var_ += eps
        if np.any(self.var_ <= 0):
            raise ValueError("zero variance feature; increase var_smoothing")
        with np.errstate(divide="ignore"):
            self.log_prior_ = np.log(counts / counts.sum())
        return self

    def joint_log_likelihood(self, X):
        self._check_fitted()
        X = check_xy(X)
        out = np.empty((len(X), self.n_classes))
        for c in range(self.n_classes):
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[c]))
            ll = ll - 0.5 * (((X - self.theta_[c]) ** 2) / self.var_[c]).sum(axis=1)
            out[:, c] = self.log_prior_[c] + ll
        return out

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        jll = jll - jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.joint_log_likelihood(X).argmax(axis=1)

    def get_state(self):
        return {"theta": self.theta_, "var": self.var_, "log_prior": self.log_prior_}

    def set_state(self, state):
        self.theta_ = np.asarray(state["theta"], float)
        self.var_ = np.asarray(state["var"], float)
        self.log_prior_ = np.asarray(state["log_prior"], float)
