import json

import numpy as np

SCHEMA_VERSION = 1
_CLIP = 1e-12


class ModelError(RuntimeError):
    pass


class FittedModel:
    """Common surface of every fitted classifier.

    Subclasses implement ``_proba`` (class-1 probabilities) and optionally
    ``margin`` when a native log-odds is cheaper than re-deriving it.
    """

    family = "base"

    def __init__(self, n_features, meta=None):
        self.n_features = int(n_features)
        self.meta = dict(meta or {})

    def predict_proba(self, X):
        X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return np.clip(self._proba(X), 0.0, 1.0)

    def margin(self, X):
        p = np.clip(self.predict_proba(X), _CLIP, 1.0 - _CLIP)
        return np.log(p) - np.log1p(-p)

    def _proba(self, X):
        raise NotImplementedError

    def _params(self):
        raise NotImplementedError

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "family": self.family,
            "n_features": self.n_features,
            "meta": _jsonable(self.meta),
            "params": self._params(),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def check_binary(y, sample_weight=None):
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    if y.min() == y.max():
        raise ModelError("training data contains a single class")
    if sample_weight is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(sample_weight, dtype=np.float64).ravel()
        if w.shape != y.shape or (w < 0).any():
            raise ValueError("sample_weight must be non-negative and match y")
    return y, w
