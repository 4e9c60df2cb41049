import numpy as np

from .base import Classifier, check_xy, n_classes_of


def minkowski(A, B, p=2.0, chunk=256):
    """Pairwise sum(|a - b|^p) (the p-th power of the Minkowski distance).

    The root is skipped because it is monotone and neighbour order is all
    that matters. p=2 uses the expanded-square identity.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if p == 2:
        d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.maximum(d, 0.0)
    out = np.empty((len(A), len(B)))
    for i in range(0, len(A), chunk):
        diff = np.abs(A[i:i + chunk, None, :] - B[None, :, :])
        out[i:i + chunk] = (diff if p == 1 else diff**p).sum(-1)
    return out


class KNN(Classifier):
    """k-nearest neighbours, majority vote.

    Equal distances resolve to the lower training index; vote ties go to
    the smallest class index.
    """

    kind = "knn"

    def __init__(self, n_neighbors=5, p=2.0):
        if n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if p < 1:
            raise ValueError("distance order p must be >= 1")
        super().__init__(n_neighbors=int(n_neighbors), p=float(p))

    def fit(self, X, y, n_classes=None):
        X, y = check_xy(X, y)
        self.n_classes = n_classes_of(y, n_classes)
        self.X_, self.y_ = X.copy(), y.copy()
        return self

    def neighbors(self, X, distances=None):
        self._check_fitted()
        if distances is None:
            distances = minkowski(check_xy(X), self.X_, self.hyperparams["p"])
        k = min(self.hyperparams["n_neighbors"], len(self.X_))
        return np.argsort(distances, axis=1, kind="stable")[:, :k]

    def predict(self, X, distances=None):
        nb = self.neighbors(X, distances)
        votes = np.zeros((len(nb), self.n_classes), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(len(nb)), nb.shape[1]), self.y_[nb].ravel()), 1)
        return votes.argmax(axis=1)

    def get_state(self):
        return {"X": self.X_, "y": self.y_}

    def set_state(self, state):
        self.X_, self.y_ = np.asarray(state["X"], float), np.asarray(state["y"], np.int64)
