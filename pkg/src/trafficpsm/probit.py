"""Probit regression by Newton-Raphson maximum likelihood.

The conventional propensity baseline. Covariates are z-scored before the
Newton iterations and the coefficients mapped back afterwards, which keeps
the Hessian well conditioned on raw hourly counts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DegenerateTrainingError, RankError, SeparationError, ShapeError

__all__ = [
    "ProbitModel",
    "norm_cdf",
    "fit_probit",
    "predict_probit",
    "log_likelihood",
    "loglik_gradient",
    "ProbitClassifier",
]

PROBA_CLIP = 1e-9
SEPARATION_NORM = 1e3
_MAX_HALVINGS = 40


def norm_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


@dataclass(frozen=True)
class ProbitModel:
    coefficients: np.ndarray  # intercept first
    converged: bool
    iterations: int
    log_likelihood: float = float("nan")

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0] - 1


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.column_stack([np.ones(X.shape[0]), X])


def log_likelihood(beta, X, y) -> float:
    """Probit log-likelihood of coefficients ``beta`` (intercept first)."""
    eta = _design(X) @ np.asarray(beta, dtype=float)
    q = 2.0 * np.asarray(y, dtype=float) - 1.0
    return float(np.sum(special.log_ndtr(q * eta)))


def _mills(eta, q):
    # q * phi(q eta) / Phi(q eta), evaluated in log space for the tails
    z = q * eta
    return q * np.exp(-0.5 * z * z - 0.5 * np.log(2 * np.pi) - special.log_ndtr(z))


def loglik_gradient(beta, X, y) -> np.ndarray:
    """Gradient of :func:`log_likelihood` with respect to ``beta``."""
    D = _design(X)
    q = 2.0 * np.asarray(y, dtype=float) - 1.0
    return D.T @ _mills(D @ np.asarray(beta, dtype=float), q)


def fit_probit(X, y, max_iter: int = 100, tol: float = 1e-8) -> ProbitModel:
    """Maximum-likelihood probit fit with step-halving Newton iterations.

    Zero-variance covariates get a zero coefficient. ``converged`` means the
    raw-scale gradient has infinity-norm below ``tol``.

    Raises
    ------
    SeparationError
        Likelihood unbounded: standardized coefficient norm above 1e3, or
        every observation predicted with probability ~1.
    RankError
        Singular Hessian (collinear covariates).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ShapeError(f"X has {n} rows but y has {y.shape[0]}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if np.unique(y).size < 2:
        raise DegenerateTrainingError("labels contain a single class")
    if p + 1 > n:
        raise RankError(f"{p + 1} coefficients but only {n} rows")

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    active = sd > 0
    Z = (X[:, active] - mu[active]) / sd[active]
    D = np.column_stack([np.ones(n), Z])
    q = 2.0 * y - 1.0

    def ll(b):
        return float(np.sum(special.log_ndtr(q * (D @ b))))

    def to_raw(b):
        raw = np.zeros(p + 1)
        raw[1:][active] = b[1:] / sd[active]
        raw[0] = b[0] - np.sum(raw[1:][active] * mu[active])
        return raw

    beta = np.zeros(D.shape[1])
    beta[0] = special.ndtri(y.mean())
    cur = ll(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = D @ beta
        lam = _mills(eta, q)
        grad = D.T @ lam
        raw_grad = loglik_gradient(to_raw(beta), X, y)
        if np.max(np.abs(raw_grad)) < tol:
            converged = True
            it -= 1
            break
        w = lam * (lam + eta)
        hess = (D * w[:, None]).T @ D
        try:
            if np.linalg.cond(hess) > 1e13:
                raise np.linalg.LinAlgError("ill-conditioned")
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            if np.all(special.ndtr(q * eta) > 1 - 1e-8):
                raise SeparationError("every observation fitted with probability ~1") from exc
            raise RankError(f"singular Hessian at iteration {it}") from exc
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = beta + t * step
            new = ll(cand)
            if new >= cur:
                break
            t *= 0.5
        else:
            break  # no ascent possible at floating-point resolution
        beta, cur = cand, new
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(f"standardized coefficient norm {np.linalg.norm(beta):.3g} exceeds {SEPARATION_NORM:g}")
        if np.all(special.ndtr(q * (D @ beta)) > 1 - 1e-8):
            raise SeparationError("every observation fitted with probability ~1")
    else:
        raw_grad = loglik_gradient(to_raw(beta), X, y)
        converged = bool(np.max(np.abs(raw_grad)) < tol)

    raw = to_raw(beta)
    return ProbitModel(raw, converged, it, log_likelihood(raw, X, y))


def predict_probit(model: ProbitModel, X):
    """Phi(b0 + b.x), clipped to [1e-9, 1 - 1e-9]; scalar for one vector."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise ShapeError(f"expected {model.n_features} covariates, got {X.shape[1]}")
    p = np.clip(norm_cdf(_design(X) @ model.coefficients), PROBA_CLIP, 1 - PROBA_CLIP)
    return float(p[0]) if single else p


class ProbitClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, max_iter=100, tol=1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_, y01 = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise DegenerateTrainingError(f"need exactly 2 classes, got {self.classes_.size}")
        self.model_ = fit_probit(X, y01, self.max_iter, self.tol)
        self.coef_ = self.model_.coefficients[1:]
        self.intercept_ = self.model_.coefficients[0]
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} covariates, got {X.shape[1]}")
        p = np.clip(norm_cdf(self.intercept_ + X @ self.coef_), PROBA_CLIP, 1 - PROBA_CLIP)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]
