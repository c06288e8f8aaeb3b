"""Soft-margin support vector machine trained by sequential minimal optimization."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import ConvergenceError, ParseError, ValidationError

KERNELS = ("linear", "rbf")
_TAU = 1e-12
_CACHE_ROWS = 4096


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, scale: float = 1.0) -> np.ndarray:
    """Linear ``u.v`` or Gaussian ``exp(-||u - v||^2)`` on inputs divided by ``scale``."""
    A = np.asarray(A, dtype=float) / scale
    B = np.asarray(B, dtype=float) / scale
    if kernel == "linear":
        return A @ B.T
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-np.maximum(sq, 0.0))


def kkt_residuals(alpha: np.ndarray, y: np.ndarray, margin: np.ndarray, C: float) -> np.ndarray:
    """Violation of the KKT conditions per dual variable.

    ``margin`` is ``y * f(x)``. At zero the margin must be at least 1, strictly
    inside the box it must equal 1, and at ``C`` it must be at most 1.
    """
    r = np.zeros_like(alpha)
    lo = alpha <= 0
    hi = alpha >= C
    free = ~lo & ~hi
    r[lo] = np.maximum(0.0, 1.0 - margin[lo])
    r[hi] = np.maximum(0.0, margin[hi] - 1.0)
    r[free] = np.abs(margin[free] - 1.0)
    return r


class _QRows:
    """Rows of ``Q = (y y^T) * K`` computed on demand and cached."""

    def __init__(self, X, y, kernel, scale):
        self.X, self.y, self.kernel, self.scale = X, y, kernel, scale
        n = X.shape[0]
        self.full = kernel_matrix(X, X, kernel, scale) * np.outer(y, y) if n <= _CACHE_ROWS else None
        self.cache = {}
        if self.full is not None:
            self.diag = np.diag(self.full).copy()
        elif kernel == "rbf":
            self.diag = np.ones(n)
        else:
            self.diag = ((X / scale) ** 2).sum(1)

    def __call__(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        row = self.cache.get(i)
        if row is None:
            if len(self.cache) >= _CACHE_ROWS:
                self.cache.pop(next(iter(self.cache)))
            row = kernel_matrix(self.X[i:i + 1], self.X, self.kernel, self.scale)[0] * self.y[i] * self.y
            self.cache[i] = row
        return row


def smo_solve(Q: _QRows, y: np.ndarray, C: float, tol: float, max_iter: int):
    """Minimize ``1/2 a^T Q a - sum(a)`` subject to ``0 <= a <= C`` and ``y^T a = 0``.

    The working pair is the maximal violating pair; ties go to the first
    index. Returns ``(alpha, rho, n_iter, gap)`` where the decision function
    is ``sum(a y K) - rho``.
    """
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    pos = y > 0
    for it in range(max_iter + 1):
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        v = -y * G
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        gap = vu[i] - vl[j]
        if gap < tol:
            break
        if it == max_iter:
            raise ConvergenceError(f"SMO did not converge in {max_iter} iterations "
                                   f"(violation {gap:.3g} > tol {tol:g}, n={n})")
        Qi, Qj = Q(i), Q(j)
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(Q.diag[i] + Q.diag[j] + 2 * Qi[j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            quad = max(Q.diag[i] + Q.diag[j] - 2 * Qi[j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        G += Qi * (alpha[i] - ai) + Qj * (alpha[j] - aj)
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yG[free].mean())
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        rho = float((yG[up].min(initial=np.inf) + yG[low].max(initial=-np.inf)) / 2) \
            if up.any() and low.any() else 0.0
    return alpha, rho, it, float(gap)


class SMOClassifier(ClassifierMixin, BaseEstimator):
    """Two-class soft-margin SVM solved by sequential minimal optimization.

    Parameters
    ----------
    kernel : {"rbf", "linear"}, default="rbf"
        ``rbf`` is ``exp(-||u - v||^2)`` on the scaled inputs.
    C : float, default=1.0
        Box constraint on the dual coefficients.
    kernel_scale : float, default=1.0
        Inputs are divided by this value before the kernel is evaluated.
    standardize : bool, default=True
        Center and scale each feature with the training mean and standard
        deviation (constant features keep scale 1).
    tol : float, default=1e-3
        Stopping tolerance on the maximal KKT violation.
    max_iter : int, default=1_000_000
        Iteration cap; exceeding it raises ``ConvergenceError``.

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
        Sorted labels; ``classes_[1]`` is the positive class. With the
        0 = frozen, 1 = non-frozen encoding, high scores mean non-frozen.
    support_vectors_ : ndarray
        Standardized support vectors.
    dual_coef_ : ndarray
        ``alpha_i * y_i`` of the support vectors.
    intercept_ : float
    n_iter_ : int
    objective_ : float
        Final dual objective ``1/2 a^T Q a - sum(a)``.
    kkt_violation_ : float
        Largest per-variable KKT residual at termination.
    """

    def __init__(self, kernel: str = "rbf", C: float = 1.0, kernel_scale: float = 1.0,
                 standardize: bool = True, tol: float = 1e-3, max_iter: int = 1_000_000):
        self.kernel = kernel
        self.C = C
        self.kernel_scale = kernel_scale
        self.standardize = standardize
        self.tol = tol
        self.max_iter = max_iter

    def _transform(self, X) -> np.ndarray:
        return (X - self.mean_) / self.scale_

    def fit(self, X, y):
        if self.kernel not in KERNELS:
            raise ValidationError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not (self.C > 0 and self.kernel_scale > 0 and self.tol > 0):
            raise ValidationError("C, kernel_scale and tol must be positive")
        X, y = check_X_y(X, y)
        self.classes_, yi = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValidationError(f"need exactly two classes, got {self.classes_.size}")
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale_ = np.where(sd > 0, sd, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Z = self._transform(X)
        ys = np.where(yi == 1, 1.0, -1.0)
        Q = _QRows(Z, ys, self.kernel, self.kernel_scale)
        alpha, rho, self.n_iter_, self.gap_ = smo_solve(Q, ys, float(self.C), float(self.tol), int(self.max_iter))
        sv = alpha > 0
        self.support_ = np.flatnonzero(sv)
        self.support_vectors_ = Z[sv]
        self.dual_coef_ = alpha[sv] * ys[sv]
        self.intercept_ = -rho
        self.alpha_ = alpha
        Ka = kernel_matrix(Z, self.support_vectors_, self.kernel, self.kernel_scale) @ self.dual_coef_
        self.objective_ = float(0.5 * (alpha * ys) @ Ka - alpha.sum())
        margin = ys * (Ka + self.intercept_)
        self.kkt_violation_ = float(kkt_residuals(alpha, ys, margin, float(self.C)).max())
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "dual_coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        K = kernel_matrix(self._transform(X), self.support_vectors_, self.kernel, self.kernel_scale)
        return K @ self.dual_coef_ + self.intercept_

    def predict_scores(self, X) -> np.ndarray:
        """``100 * sigmoid(decision)``: 50 on the boundary, high for ``classes_[1]``."""
        return 100.0 * expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    # persistence

    def to_dict(self, metadata: dict | None = None) -> dict:
        check_is_fitted(self, "dual_coef_")
        body = {"kernel": self.kernel, "kernel_scale": float(self.kernel_scale), "C": float(self.C),
                "tol": float(self.tol), "classes": self.classes_.tolist(),
                "mean": self.mean_.tolist(), "scale": self.scale_.tolist(),
                "support_vectors": self.support_vectors_.tolist(), "dual_coef": self.dual_coef_.tolist(),
                "intercept": float(self.intercept_), "metadata": metadata or {}}
        return {**body, "sha256": content_hash(body)}

    @classmethod
    def from_dict(cls, d: dict) -> "SMOClassifier":
        body = {k: v for k, v in d.items() if k != "sha256"}
        if d.get("sha256") != content_hash(body):
            raise ParseError("model content hash does not match")
        m = cls(kernel=d["kernel"], C=d["C"], kernel_scale=d["kernel_scale"], tol=d["tol"])
        m.classes_ = np.asarray(d["classes"])
        m.mean_ = np.asarray(d["mean"], dtype=float)
        m.scale_ = np.asarray(d["scale"], dtype=float)
        m.n_features_in_ = m.mean_.size
        m.support_vectors_ = np.asarray(d["support_vectors"], dtype=float).reshape(-1, m.n_features_in_)
        m.dual_coef_ = np.asarray(d["dual_coef"], dtype=float)
        m.intercept_ = float(d["intercept"])
        return m

    def save(self, path, metadata: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(metadata), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SMOClassifier":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        try:
            return cls.from_dict(d)
        except KeyError as exc:
            raise ParseError(f"{path}: missing model field {exc}") from exc
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc


def content_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
