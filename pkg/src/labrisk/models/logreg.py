"""L2-penalised logistic regression fitted by damped Newton iterations."""

import logging

import numpy as np

from .base import FittedModel, check_binary, sigmoid

logger = logging.getLogger(__name__)


class LogisticModel(FittedModel):
    family = "logreg"

    def __init__(self, coef, intercept, meta=None):
        coef = np.asarray(coef, dtype=np.float64)
        super().__init__(coef.shape[0], meta)
        self.coef = coef
        self.intercept = float(intercept)

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept

    def margin(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return self.decision_function(X)

    def _proba(self, X):
        return sigmoid(self.decision_function(X))

    def _params(self):
        return {"coef": self.coef.tolist(), "intercept": self.intercept}


def penalized_objective(theta, X, y, w, C):
    """Objective, gradient and Hessian; ``theta = [intercept, coef...]``.

    sum_i w_i * logloss_i + ||coef||^2 / (2 C), intercept unpenalised.
    """
    z = theta[0] + X @ theta[1:]
    p = sigmoid(z)
    beta = theta[1:]
    f = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) + beta @ beta / (2.0 * C))
    r = w * (p - y)
    grad = np.empty_like(theta)
    grad[0] = r.sum()
    grad[1:] = X.T @ r + beta / C
    s = w * p * (1.0 - p)
    Xa = np.column_stack([np.ones(len(X)), X])
    hess = (Xa * s[:, None]).T @ Xa
    hess[1:, 1:] += np.eye(len(beta)) / C
    return f, grad, hess


def fit_logreg(X, y, sample_weight=None, C=1.0, tol=1e-6, max_iter=1000):
    if C <= 0:
        raise ValueError("C must be positive")
    X = np.asarray(X, dtype=np.float64)
    y, w = check_binary(y, sample_weight)
    d = X.shape[1]
    theta = np.zeros(d + 1)
    base = np.clip(np.sum(w * y) / np.sum(w), 1e-12, 1 - 1e-12)
    theta[0] = np.log(base / (1 - base))

    f, grad, hess = penalized_objective(theta, X, y, w, C)
    n_iter = 0
    while n_iter < max_iter and np.max(np.abs(grad)) >= tol:
        n_iter += 1
        try:
            step = np.linalg.solve(hess, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = grad @ step
        if slope >= 0:  # not a descent direction; fall back to steepest descent
            step = -grad
            slope = -(grad @ grad)
        t = 1.0
        while True:
            cand = theta + t * step
            f_new, g_new, h_new = penalized_objective(cand, X, y, w, C)
            # relative slack lets full Newton steps through at float64 resolution
            if f_new <= f + 1e-4 * t * slope + 1e-13 * abs(f):
                break
            t *= 0.5
            if t < 1e-10:
                break
        if t < 1e-10:
            break  # stalled at float64 resolution
        theta, f, grad, hess = cand, f_new, g_new, h_new

    converged = bool(np.max(np.abs(grad)) < tol)
    if not converged:
        logger.warning("logistic regression did not converge (max|grad|=%.3g after %d iterations)",
                       np.max(np.abs(grad)), n_iter)
    return LogisticModel(
        theta[1:], theta[0],
        meta={"C": C, "n_iter": n_iter, "converged": converged,
              "grad_max_norm": float(np.max(np.abs(grad)))},
    )
