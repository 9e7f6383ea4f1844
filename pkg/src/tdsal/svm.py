"""Binary linear SVM with hinge loss, trained by dual coordinate ascent.

Minimizes  (lam/2)·||W||^2 + (1/T)·sum_k max(0, 1 - y_k (W^T x_k + bias)).
The bias is handled as an augmented constant-1 feature, so it participates
in the regularizer; the equivalent box constraint is C = 1/(lam*T) per
sample. Updates follow the standard one-variable closed form with a seeded
per-epoch permutation, which makes training bit-reproducible.

Dual ascent does not make the primal of the running iterate monotone, so
the model retained at each epoch boundary is the best-primal iterate seen
so far; the objective trace reports that retained iterate and is therefore
non-increasing. Training stops once the retained primal is within ``tol``
of the (monotone) dual lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DegenerateData, DimMismatch
from .io import DEFAULT_SEED, LinearModel


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.01
    max_epochs: int = 100
    tol: float = 1e-4
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.lam <= 0:
            raise DimMismatch("lam must be > 0")
        if self.max_epochs < 1:
            raise DimMismatch("max_epochs must be >= 1")
        if self.tol <= 0:
            raise DimMismatch("tol must be > 0")


def sigmoid(x):
    """Numerically stable 1 / (1 + exp(-x)); works on scalars and arrays."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def score(model: LinearModel, x) -> float:
    """Raw margin W^T x + bias, unclamped."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimMismatch(f"expected vector of dim {model.dim}, got shape {x.shape}")
    return float(np.dot(model.weights, x) + model.bias)


def _primal(w_aug: np.ndarray, x_aug: np.ndarray, y: np.ndarray, lam: float) -> float:
    margins = 1.0 - y * (x_aug @ w_aug)
    hinge = np.maximum(margins, 0.0).mean()
    return 0.5 * lam * float(w_aug @ w_aug) + float(hinge)


def solve(x: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Run the solver; returns (model, info) with the per-epoch objective trace."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimMismatch("x must be (T, dim) with matching labels")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateData("training data must contain both labels")
    t, dim = x.shape
    x_aug = np.hstack([x, np.ones((t, 1))])
    c = 1.0 / (cfg.lam * t)
    q_diag = np.einsum("ij,ij->i", x_aug, x_aug)
    alpha = np.zeros(t)
    w = np.zeros(dim + 1)
    rng = np.random.default_rng(cfg.seed)
    trace: list[float] = []
    best_primal = np.inf
    best_w = w.copy()
    gap = np.inf
    epochs = 0
    for _ in range(cfg.max_epochs):
        for i in rng.permutation(t):
            g = y[i] * float(x_aug[i] @ w) - 1.0
            if (alpha[i] <= 0.0 and g >= 0.0) or (alpha[i] >= c and g <= 0.0):
                continue
            new = min(max(alpha[i] - g / q_diag[i], 0.0), c)
            delta = new - alpha[i]
            if delta != 0.0:
                w += delta * y[i] * x_aug[i]
                alpha[i] = new
        epochs += 1
        primal = _primal(w, x_aug, y, cfg.lam)
        if primal < best_primal:
            best_primal = primal
            best_w = w.copy()
        trace.append(best_primal)
        dual = cfg.lam * (float(alpha.sum()) - 0.5 * float(w @ w))
        gap = best_primal - dual
        if gap < cfg.tol:
            break
    model = LinearModel(weights=best_w[:dim].copy(), bias=float(best_w[dim]))
    info = {"objective": best_primal, "trace": trace, "gap": gap, "epochs": epochs}
    return model, info


def train(samples, cfg: TrainConfig | None = None) -> LinearModel:
    """Train on a list of (vector, label in {+1, -1}) pairs."""
    cfg = cfg or TrainConfig()
    if not samples:
        raise DegenerateData("empty training set")
    vectors = [np.asarray(v, dtype=np.float64) for v, _ in samples]
    if len({v.shape for v in vectors}) != 1:
        raise DimMismatch("sample vectors differ in dimension")
    x = np.array(vectors)
    y = np.array([lbl for _, lbl in samples], dtype=np.float64)
    model, _ = solve(x, y, cfg)
    return model


class HingeSVC(BaseEstimator):
    """sklearn-style facade over the dual coordinate ascent solver."""

    def __init__(self, lam: float = 0.01, max_epochs: int = 100,
                 tol: float = 1e-4, seed: int = DEFAULT_SEED):
        self.lam = lam
        self.max_epochs = max_epochs
        self.tol = tol
        self.seed = seed

    def fit(self, X, y):
        cfg = TrainConfig(self.lam, self.max_epochs, self.tol, self.seed)
        self.model_, info = solve(np.asarray(X), np.asarray(y), cfg)
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.bias
        self.objective_trace_ = info["trace"]
        self.gap_ = info["gap"]
        self.n_epochs_ = info["epochs"]
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return score(self.model_, X)
        return X @ self.model_.weights + self.model_.bias

    def predict(self, X):
        return np.where(np.asarray(self.decision_function(X)) >= 0.0, 1, -1)
