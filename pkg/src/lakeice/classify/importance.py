"""Band importance from Newton-boosted regression trees on logistic loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import ValidationError


@dataclass
class _Node:
    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None


def best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, reg_lambda: float):
    """Exact greedy split maximizing the second-order gain.

    Gain is ``1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)]``. Thresholds sit
    midway between consecutive distinct values. Ties go to the lowest
    feature index, then the lowest threshold. Returns ``(gain, feature,
    threshold)`` with ``feature = -1`` when no split has positive gain.
    """
    G, H = g.sum(), h.sum()
    parent = G * G / (H + reg_lambda)
    best = (0.0, -1, 0.0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cut = np.flatnonzero(xs[1:] > xs[:-1])
        if cut.size == 0:
            continue
        GL = np.cumsum(g[order])[cut]
        HL = np.cumsum(h[order])[cut]
        gain = 0.5 * (GL ** 2 / (HL + reg_lambda) + (G - GL) ** 2 / (H - HL + reg_lambda) - parent)
        k = int(np.argmax(gain))
        if gain[k] > best[0]:
            best = (float(gain[k]), f, float((xs[cut[k]] + xs[cut[k] + 1]) / 2))
    return best


class BoostedTreeImportance(BaseEstimator):
    """Gradient-boosted depth-limited trees whose split counts rank the bands.

    Parameters
    ----------
    n_rounds : int, default=20
    max_depth : int, default=2
    learning_rate : float, default=0.3
    reg_lambda : float, default=1.0
        L2 penalty on leaf weights.
    min_child_weight : float, default=1.0
        Minimum hessian sum in each child.

    Attributes
    ----------
    split_counts_ : ndarray of shape (n_features,)
        Number of splits that use each band.
    feature_importances_ : ndarray of shape (n_features,)
        Split counts normalized to sum to 1 (all zero if no split was made).
    ranking_ : ndarray
        Band indices by decreasing importance; constant bands come last,
        remaining ties go by index.
    """

    def __init__(self, n_rounds: int = 20, max_depth: int = 2, learning_rate: float = 0.3,
                 reg_lambda: float = 1.0, min_child_weight: float = 1.0):
        self.n_rounds = n_rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight

    def _grow(self, X, g, h, idx, depth) -> _Node:
        node = _Node(weight=-g[idx].sum() / (h[idx].sum() + self.reg_lambda))
        if depth >= self.max_depth or idx.size < 2:
            return node
        gain, f, thr = best_split(X[idx], g[idx], h[idx], self.reg_lambda)
        if f < 0:
            return node
        left = idx[X[idx, f] < thr]
        right = idx[X[idx, f] >= thr]
        if h[left].sum() < self.min_child_weight or h[right].sum() < self.min_child_weight:
            return node
        self.split_counts_[f] += 1
        self.gains_[f] += gain
        node.feature, node.threshold = f, thr
        node.left = self._grow(X, g, h, left, depth + 1)
        node.right = self._grow(X, g, h, right, depth + 1)
        return node

    @staticmethod
    def _predict_tree(node: _Node, X: np.ndarray) -> np.ndarray:
        if node.feature < 0:
            return np.full(X.shape[0], node.weight)
        out = np.empty(X.shape[0])
        lo = X[:, node.feature] < node.threshold
        out[lo] = BoostedTreeImportance._predict_tree(node.left, X[lo])
        out[~lo] = BoostedTreeImportance._predict_tree(node.right, X[~lo])
        return out

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] < 2:
            raise ValidationError("band importance needs at least two bands")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValidationError(f"need exactly two classes, got {self.classes_.size}")
        t = yi.astype(float)
        self.n_features_in_ = X.shape[1]
        self.split_counts_ = np.zeros(X.shape[1], dtype=np.int64)
        self.gains_ = np.zeros(X.shape[1])
        self.trees_ = []
        margin = np.zeros(X.shape[0])
        idx = np.arange(X.shape[0])
        for _ in range(self.n_rounds):
            p = expit(margin)
            g, h = p - t, p * (1 - p)
            tree = self._grow(X, g, h, idx, 0)
            self.trees_.append(tree)
            margin += self.learning_rate * self._predict_tree(tree, X)
        total = self.split_counts_.sum()
        self.feature_importances_ = self.split_counts_ / total if total else np.zeros(X.shape[1])
        constant = (X == X[:1]).all(axis=0)
        self.ranking_ = np.lexsort((np.arange(X.shape[1]), constant, -self.feature_importances_))
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "trees_")
        X = check_array(X)
        return sum(self.learning_rate * self._predict_tree(t, X) for t in self.trees_)


def band_importance(X, y, bands=None, n_rounds: int = 20, tree_depth: int = 2) -> list:
    """``(band, F-score)`` pairs sorted by decreasing normalized split count."""
    est = BoostedTreeImportance(n_rounds=n_rounds, max_depth=tree_depth).fit(X, y)
    names = list(bands) if bands is not None else [str(i) for i in range(est.n_features_in_)]
    if len(names) != est.n_features_in_:
        raise ValidationError("band names do not match the feature count")
    return [(names[i], float(est.feature_importances_[i])) for i in est.ranking_]
