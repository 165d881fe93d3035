import numpy as np

from .base import FittedModel, check_binary


class GaussianNBModel(FittedModel):
    family = "gaussian_nb"

    def __init__(self, theta, var, class_prior, meta=None):
        theta = np.asarray(theta, dtype=np.float64)
        super().__init__(theta.shape[1], meta)
        self.theta = theta
        self.var = np.asarray(var, dtype=np.float64)
        self.class_prior = np.asarray(class_prior, dtype=np.float64)

    def joint_log_likelihood(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.empty((X.shape[0], 2))
        for c in range(2):
            norm = -0.5 * np.sum(np.log(2.0 * np.pi * self.var[c]))
            quad = -0.5 * np.sum((X - self.theta[c]) ** 2 / self.var[c], axis=1)
            out[:, c] = np.log(self.class_prior[c]) + norm + quad
        return out

    def margin(self, X):
        jll = self.joint_log_likelihood(X)
        return jll[:, 1] - jll[:, 0]

    def _proba(self, X):
        jll = self.joint_log_likelihood(X)
        top = jll.max(axis=1, keepdims=True)
        p = np.exp(jll - top)
        return p[:, 1] / p.sum(axis=1)

    def _params(self):
        return {"theta": self.theta.tolist(), "var": self.var.tolist(),
                "class_prior": self.class_prior.tolist()}


def fit_gaussian_nb(X, y, sample_weight=None):
    """Weighted per-class Gaussian fit.

    The variance floor is 1e-9 times the largest per-feature variance of X,
    which does not depend on the weights, so rescaling all weights is a no-op.
    """
    X = np.asarray(X, dtype=np.float64)
    y, w = check_binary(y, sample_weight)
    eps = 1e-9 * float(np.var(X, axis=0).max()) if X.size else 0.0
    if eps == 0.0:
        eps = 1e-9
    theta = np.empty((2, X.shape[1]))
    var = np.empty((2, X.shape[1]))
    prior = np.empty(2)
    total = w.sum()
    for c in range(2):
        wc = w * (y == c)
        sc = wc.sum()
        theta[c] = wc @ X / sc
        var[c] = wc @ (X - theta[c]) ** 2 / sc + eps
        prior[c] = sc / total
    return GaussianNBModel(theta, var, prior, meta={"var_floor": eps})
