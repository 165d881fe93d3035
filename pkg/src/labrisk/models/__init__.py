"""Classifier families behind one contract: fit on weighted rows, emit P(class=1)."""

import json
from dataclasses import dataclass, field

import numpy as np

from .base import SCHEMA_VERSION, FittedModel, ModelError, sigmoid
from .forest import ForestModel, fit_random_forest, forest_from_params
from .gbdt import GBDTModel, fit_gbdt, gbdt_from_params
from .logreg import LogisticModel, fit_logreg
from .mlp import MLPModel, fit_mlp
from .naive_bayes import GaussianNBModel, fit_gaussian_nb

__all__ = [
    "ClassifierSpec", "FittedModel", "ModelError", "PARAM_GRIDS", "ROLE_FAMILY",
    "fit_model", "predict_proba", "model_from_dict", "model_from_json",
    "fit_logreg", "fit_gaussian_nb", "fit_random_forest", "fit_gbdt", "fit_mlp",
    "LogisticModel", "GaussianNBModel", "ForestModel", "GBDTModel", "MLPModel",
    "sigmoid",
]

# Model roles as they appear in the benchmark grid, and the engine behind each.
# Both boosting roles run the same engine with their own grids.
ROLE_FAMILY = {
    "logreg": "logreg",
    "rf": "random_forest",
    "xgb_role": "gbdt",
    "lgbm_role": "gbdt",
    "mlp": "mlp",
    "nb": "gaussian_nb",
}

ROLE_DISPLAY = {
    "logreg": "LogisticRegression",
    "rf": "RandomForest",
    "xgb_role": "XGB",
    "lgbm_role": "LGBM",
    "mlp": "MLP",
    "nb": "NaiveBayes",
}

PARAM_GRIDS = {
    "logreg": {"C": [0.001, 0.01, 0.1, 1, 10, 100]},
    "rf": {
        "n_estimators": [50, 100, 200],
        "max_depth": [3, 5, 10, 15, None],
        "min_samples_split": [2, 5, 10],
        "min_samples_leaf": [1, 2, 4],
    },
    "xgb_role": {
        "n_estimators": [100, 200, 300],
        "max_depth": [3, 6, 9],
        "learning_rate": [0.01, 0.1, 0.2],
        "subsample": [0.8, 0.9, 1.0],
    },
    "lgbm_role": {
        "n_estimators": [100, 200, 300],
        "max_depth": [3, 6, 9],
        "learning_rate": [0.01, 0.1, 0.2],
    },
    "mlp": {
        "hidden_layer_sizes": [(50,), (100,), (50, 50), (100, 50), (100, 50, 25)],
        "alpha": [0.0001, 0.001, 0.01, 0.1],
        "learning_rate": ["constant", "adaptive"],
    },
    "nb": {},
}

_FITTERS = {
    "logreg": fit_logreg,
    "random_forest": fit_random_forest,
    "gbdt": fit_gbdt,
    "mlp": fit_mlp,
    "gaussian_nb": fit_gaussian_nb,
}

_SEEDED = {"random_forest", "gbdt", "mlp"}


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    hyperparams: dict = field(default_factory=dict)
    seed: int = 0
    role: str | None = None

    def __post_init__(self):
        if self.family not in _FITTERS:
            raise ValueError(f"unknown model family {self.family!r}")


def fit_model(spec, X, y, sample_weight=None, **extra):
    """Fit ``spec`` on (X, y). ``extra`` carries engine knobs outside the grid."""
    kwargs = dict(spec.hyperparams)
    kwargs.update(extra)
    if spec.family in _SEEDED:
        kwargs["seed"] = spec.seed
    model = _FITTERS[spec.family](X, y, sample_weight, **kwargs)
    if spec.role is not None:
        model.meta["role"] = spec.role
    return model


def predict_proba(model, X):
    return model.predict_proba(X)


def model_from_dict(d):
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema {d.get('schema_version')!r}")
    family, p, meta, n_features = d["family"], d["params"], d.get("meta", {}), d["n_features"]
    if family == "logreg":
        return LogisticModel(p["coef"], p["intercept"], meta)
    if family == "gaussian_nb":
        return GaussianNBModel(p["theta"], p["var"], p["class_prior"], meta)
    if family == "random_forest":
        return forest_from_params(n_features, p, meta)
    if family == "gbdt":
        return gbdt_from_params(n_features, p, meta)
    if family == "mlp":
        return MLPModel([np.asarray(W) for W in p["weights"]], p["biases"], meta)
    raise ValueError(f"unknown model family {family!r}")


def model_from_json(text):
    return model_from_dict(json.loads(text))
