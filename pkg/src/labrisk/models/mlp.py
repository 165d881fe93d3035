"""Feed-forward ReLU network with a sigmoid output unit.

Training is plain mini-batch gradient descent (no momentum). The L2 term is
applied as an implicit (proximal) shrink after each data-gradient step,
``W <- (W - lr * grad) / (1 + lr * alpha / n)``, which stays stable for any
``alpha``; its fixed points are the stationary points of the full objective.
"""

import logging

import numpy as np

from .base import FittedModel, ModelError, check_binary, sigmoid

logger = logging.getLogger(__name__)


class MLPModel(FittedModel):
    family = "mlp"

    def __init__(self, weights, biases, meta=None):
        super().__init__(np.asarray(weights[0]).shape[0], meta)
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]

    def margin(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return forward(self.weights, self.biases, X)[-1].ravel()

    def _proba(self, X):
        return sigmoid(self.margin(X))

    def _params(self):
        return {"weights": [W.tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases]}


def forward(weights, biases, X):
    """Activations per layer; the last entry is the output pre-activation."""
    acts = [X]
    a = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        a = z if i == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts


def loss_and_grad(weights, biases, X, y, w, alpha, n_total):
    """Weighted mean cross-entropy plus ``alpha / (2 n_total) * sum ||W||^2``.

    Returns ``(loss, weight_grads, bias_grads)`` for the full objective.
    """
    acts = forward(weights, biases, X)
    z = acts[-1].ravel()
    wsum = w.sum()
    data = float(np.sum(w * (np.logaddexp(0.0, z) - y * z)) / wsum)
    penalty = 0.5 * alpha / n_total * sum(float(np.sum(W * W)) for W in weights)
    delta = ((sigmoid(z) - y) * w / wsum)[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(weights)
    for i in range(len(weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta + alpha / n_total * weights[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ weights[i].T) * (acts[i] > 0)
    return data + penalty, gW, gb


def _init(layer_sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return weights, biases


def fit_mlp(X, y, sample_weight=None, hidden_layer_sizes=(100,), alpha=1e-4,
            learning_rate="constant", seed=0, max_epochs=200, learning_rate_init=0.01,
            batch_size=200, tol=1e-4, n_iter_no_change=10):
    if learning_rate not in ("constant", "adaptive"):
        raise ValueError(f"unknown learning_rate schedule {learning_rate!r}")
    X = np.asarray(X, dtype=np.float64)
    y, w = check_binary(y, sample_weight)
    n, d = X.shape
    rng = np.random.default_rng(int(seed))
    sizes = [d, *[int(k) for k in hidden_layer_sizes], 1]
    weights, biases = _init(sizes, rng)
    bs = min(int(batch_size), n)
    lr = float(learning_rate_init)
    best = np.inf
    stall = 0
    history = []
    epochs = 0
    for epochs in range(1, int(max_epochs) + 1):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            if w[idx].sum() <= 0:
                continue
            _, gW, gb = loss_and_grad(weights, biases, X[idx], y[idx], w[idx], 0.0, n)
            shrink = 1.0 + lr * alpha / n
            for i in range(len(weights)):
                weights[i] = (weights[i] - lr * gW[i]) / shrink
                biases[i] = biases[i] - lr * gb[i]
        loss, _, _ = loss_and_grad(weights, biases, X, y, w, alpha, n)
        if not np.isfinite(loss):
            raise ModelError(
                f"MLP diverged at epoch {epochs} (seed={seed}, hidden={tuple(hidden_layer_sizes)}, "
                f"alpha={alpha}, learning_rate={learning_rate}, lr={lr})")
        history.append(loss)
        if loss > best - tol:
            stall += 1
        else:
            stall = 0
        best = min(best, loss)
        if learning_rate == "adaptive":
            if stall >= 2:
                lr /= 2.0
                stall = 0
                if lr < 1e-6:
                    break
        elif stall >= n_iter_no_change:
            break
    return MLPModel(weights, biases, meta={
        "hidden_layer_sizes": list(hidden_layer_sizes), "alpha": alpha,
        "learning_rate": learning_rate, "seed": int(seed), "epochs": epochs,
        "final_lr": lr, "loss_curve": history,
    })
