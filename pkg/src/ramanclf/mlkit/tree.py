"""CART decision trees (Gini) and random forests built on them."""

from __future__ import annotations

import math

import numpy as np

from .base import Classifier, check_xy, n_classes_of

LEAF = -1


def _best_split(X, y, n_classes, min_leaf, features):
    """Exhaustive search over midpoints of sorted unique values.

    Returns (feature, threshold, weighted_impurity) or None. Ties go to the
    lowest feature index, then the lowest threshold.
    """
    n = len(y)
    if n < 2 * min_leaf:
        return None
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    onehot = np.eye(n_classes, dtype=np.int64)[y[order]]  # (n, f, K)
    left = np.cumsum(onehot, axis=0)[:-1]  # split after row i
    total = left[-1] + onehot[-1]
    right = total[None] - left
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    # weighted Gini: n_l * (1 - sum p_l^2) + n_r * (1 - sum p_r^2)
    imp = (nl - (left**2).sum(-1) / nl) + (nr - (right**2).sum(-1) / nr)
    valid = xs[1:] > xs[:-1]
    pos = np.arange(1, n)[:, None]
    valid &= (pos >= min_leaf) & (n - pos >= min_leaf)
    if not valid.any():
        return None
    imp = np.where(valid, imp, np.inf)
    # feature-major flattening so argmin prefers the lowest feature index
    flat = imp.T.ravel()
    best = int(np.argmin(flat))
    fi, row = divmod(best, n - 1)
    thr = 0.5 * (xs[row, fi] + xs[row + 1, fi])
    if not xs[row, fi] < thr:
        thr = xs[row, fi]  # adjacent floats: keep left side non-empty
    return int(features[fi]), float(thr), float(flat[best])


class _TreeBuilder:
    def __init__(self, n_classes, min_leaf, min_split, max_depth, max_features, rng):
        self.k = n_classes
        self.min_leaf = min_leaf
        self.min_split = min_split
        self.max_depth = max_depth
        self.max_features = max_features
        self.rng = rng
        self.feature, self.threshold, self.left, self.right, self.counts = [], [], [], [], []

    def _new(self, counts):
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.counts.append(counts)
        return len(self.feature) - 1

    def build(self, X, y):
        n_feat = X.shape[1]
        stack = [(np.arange(len(y)), 0, None, None)]
        root = None
        while stack:
            idx, depth, parent, side = stack.pop()
            yy = y[idx]
            counts = np.bincount(yy, minlength=self.k)
            node = self._new(counts)
            if parent is None:
                root = node
            elif side == 0:
                self.left[parent] = node
            else:
                self.right[parent] = node
            if (np.count_nonzero(counts) <= 1 or len(idx) < self.min_split
                    or (self.max_depth is not None and depth >= self.max_depth)):
                continue
            if self.max_features is None or self.max_features >= n_feat:
                feats = np.arange(n_feat)
            else:
                feats = np.sort(self.rng.choice(n_feat, self.max_features, replace=False))
            split = _best_split(X[idx], yy, self.k, self.min_leaf, feats)
            if split is None:
                continue
            f, thr, _ = split
            self.feature[node], self.threshold[node] = f, thr
            go_left = X[idx, f] <= thr
            # right pushed first so the left subtree gets the lower node ids
            stack.append((idx[~go_left], depth + 1, node, 1))
            stack.append((idx[go_left], depth + 1, node, 0))
        return root

    def arrays(self):
        return {
            "feature": np.array(self.feature, dtype=np.int64),
            "threshold": np.array(self.threshold, dtype=float),
            "left": np.array(self.left, dtype=np.int64),
            "right": np.array(self.right, dtype=np.int64),
            "counts": np.array(self.counts, dtype=np.int64).reshape(-1, self.k),
        }


def _apply(tree, X):
    """Leaf index reached by every row."""
    node = np.zeros(len(X), dtype=np.int64)
    feat, thr, left, right = tree["feature"], tree["threshold"], tree["left"], tree["right"]
    active = feat[node] != LEAF
    while active.any():
        i = np.flatnonzero(active)
        nd = node[i]
        go_left = X[i, feat[nd]] <= thr[nd]
        node[i] = np.where(go_left, left[nd], right[nd])
        active[i] = feat[node[i]] != LEAF
    return node


class DecisionTree(Classifier):
    """CART classifier with Gini impurity."""

    kind = "dtree"

    def __init__(self, min_leaf=1, min_split=2, max_depth=None, max_features=None, seed=0):
        if min_leaf < 1 or min_split < 2:
            raise ValueError("min_leaf must be >= 1 and min_split >= 2")
        super().__init__(min_leaf=int(min_leaf), min_split=int(min_split),
                         max_depth=None if max_depth is None else int(max_depth),
                         max_features=max_features, seed=int(seed))

    def fit(self, X, y, n_classes=None, rng=None):
        X, y = check_xy(X, y)
        self.n_classes = n_classes_of(y, n_classes)
        hp = self.hyperparams
        mf = _resolve_max_features(hp["max_features"], X.shape[1])
        rng = np.random.default_rng(hp["seed"]) if rng is None else rng
        b = _TreeBuilder(self.n_classes, hp["min_leaf"], hp["min_split"], hp["max_depth"], mf, rng)
        b.build(X, y)
        self.tree_ = b.arrays()
        return self

    @property
    def depth(self):
        self._check_fitted()
        left, right = self.tree_["left"], self.tree_["right"]
        depth = np.zeros(len(left), dtype=np.int64)
        for i in range(len(left)):
            for c in (left[i], right[i]):
                if c != LEAF:
                    depth[c] = depth[i] + 1
        return int(depth.max())

    @property
    def n_leaves(self):
        self._check_fitted()
        return int((self.tree_["feature"] == LEAF).sum())

    def predict_counts(self, X):
        self._check_fitted()
        return self.tree_["counts"][_apply(self.tree_, check_xy(X))]

    def predict(self, X):
        # argmax picks the smallest class on equal counts
        return self.predict_counts(X).argmax(axis=1)

    def get_state(self):
        return {"tree": self.tree_}

    def set_state(self, state):
        self.tree_ = {k: np.asarray(v) for k, v in state["tree"].items()}


def _resolve_max_features(mf, n_features):
    if mf is None or mf == "all":
        return None
    if mf == "sqrt":
        return max(1, int(math.isqrt(n_features)))
    if isinstance(mf, float) and 0 < mf <= 1:
        return max(1, int(round(mf * n_features)))
    return max(1, min(int(mf), n_features))


class RandomForest(Classifier):
    """Bagged CART trees with a random feature subset at every split.

    Tree ``t`` draws its bootstrap sample and feature subsets from a
    generator seeded with (seed, t). Prediction is a majority vote of the
    trees' labels, ties to the smallest class index.
    """

    kind = "rforest"

    def __init__(self, n_estimators=100, max_depth=None, max_features="sqrt", min_leaf=1,
                 min_split=2, bootstrap=True, seed=0):
        if n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        super().__init__(n_estimators=int(n_estimators),
                         max_depth=None if max_depth is None else int(max_depth),
                         max_features=max_features, min_leaf=int(min_leaf), min_split=int(min_split),
                         bootstrap=bool(bootstrap), seed=int(seed))

    def fit(self, X, y, n_classes=None):
        X, y = check_xy(X, y)
        self.n_classes = n_classes_of(y, n_classes)
        hp = self.hyperparams
        mf = _resolve_max_features(hp["max_features"], X.shape[1])
        self.trees_ = []
        for t in range(hp["n_estimators"]):
            rng = np.random.default_rng([hp["seed"], t])
            idx = rng.integers(0, len(X), len(X)) if hp["bootstrap"] else np.arange(len(X))
            b = _TreeBuilder(self.n_classes, hp["min_leaf"], hp["min_split"], hp["max_depth"], mf, rng)
            b.build(X[idx], y[idx])
            self.trees_.append(b.arrays())
        return self

    def predict(self, X):
        self._check_fitted()
        X = check_xy(X)
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees_:
            lab = tree["counts"][_apply(tree, X)].argmax(axis=1)
            votes[rows, lab] += 1
        return votes.argmax(axis=1)

    def get_state(self):
        return {"trees": self.trees_}

    def set_state(self, state):
        self.trees_ = [{k: np.asarray(v) for k, v in t.items()} for t in state["trees"]]
