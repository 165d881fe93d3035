"""Plain-text run configuration (INI sections) and its translation into the
typed configs used by each module."""

import configparser
import io

from .cohort import SynthConfig, null_config
from .feature_select import ROUTES
from .sweep import BALANCER_SLOTS, ROLES, SweepConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "paths": {
        "data_dir": "data",
        "curated": "data/curated.csv",
        "runs_dir": "runs",
    },
    "run": {
        "seed": "0",
        "jobs": "1",
        "threshold_mode": "max_mcc",
    },
    "synth": {
        "n_subjects": "3044",
        "target_visits": "22460",
        "signal": "true",
        "prevalence_visit": "0.063",
    },
    "preprocess": {
        "missing_threshold": "0.70",
        "mice_max_iter": "10",
        "mice_tol": "0.001",
        "mice_ridge": "0.001",
        "k_neighbors": "5",
    },
    "grid": {
        "preset": "full",
        "models": ",".join(ROLES),
        "features": ",".join(ROUTES),
        "balancers": ",".join(BALANCER_SLOTS),
        "folds": "5",
        "split": "0.60,0.20,0.20",
        "rfe_trees": "50",
        "rfe_max_depth": "none",
        "rfecv_trees": "50",
        "rfecv_max_depth": "3",
        "rfecv_learning_rate": "0.1",
        "mlp_max_epochs": "200",
    },
    "bootstrap": {
        "n_boot": "2000",
        "ci_level": "0.95",
    },
    "explain": {
        "background_size": "100",
        "n_permutations": "200",
        "max_rows": "200",
    },
}

# accepted spellings on the command line / in config files
BALANCER_ALIASES = {"none": "baseline", "class_weight": "baseline"}


def _split_list(text, allowed, what, aliases=None):
    items = [t.strip() for t in str(text).split(",") if t.strip()]
    if items == ["all"]:
        return tuple(allowed)
    out = []
    for t in items:
        t = (aliases or {}).get(t, t)
        if t not in allowed:
            raise ConfigError(f"unknown {what} {t!r}; choose from {', '.join(allowed)}")
        if t not in out:
            out.append(t)
    if not out:
        raise ConfigError(f"empty {what} list")
    return tuple(a for a in allowed if a in out)  # canonical order


class RunConfig:
    """Sectioned key/value settings with every default filled in."""

    def __init__(self, parser=None):
        self.parser = configparser.ConfigParser(interpolation=None)
        self.parser.read_dict(DEFAULTS)
        if parser is not None:
            for section in parser.sections():
                if section not in DEFAULTS:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, value in parser.items(section, raw=True):
                    if key not in DEFAULTS[section]:
                        raise ConfigError(f"unknown key {key!r} in [{section}]")
                    self.parser.set(section, key, value)
        self.validate()

    @classmethod
    def from_file(cls, path):
        p = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                p.read_file(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        return cls(p)

    @classmethod
    def from_text(cls, text):
        p = configparser.ConfigParser(interpolation=None)
        p.read_string(text)
        return cls(p)

    def get(self, section, key):
        return self.parser.get(section, key)

    def set(self, section, key, value):
        if key not in DEFAULTS.get(section, {}):
            raise ConfigError(f"unknown key {section}.{key}")
        self.parser.set(section, key, str(value))
        self.validate()

    def _typed(self, section, key, kind):
        raw = self.parser.get(section, key)
        try:
            if kind is bool:
                return self.parser.getboolean(section, key)
            if kind == "opt_int":
                return None if raw.strip().lower() in ("none", "") else int(raw)
            return kind(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}") from None

    def validate(self):
        # building both typed configs surfaces every bad value early
        self.synth_config()
        self.sweep_config()
        self.explain_settings()

    # -- typed views ------------------------------------------------------------------------

    @property
    def seed(self):
        return self._typed("run", "seed", int)

    def models(self):
        return _split_list(self.get("grid", "models"), ROLES, "model")

    def routes(self):
        return _split_list(self.get("grid", "features"), ROUTES, "feature set")

    def balancers(self):
        return _split_list(self.get("grid", "balancers"), BALANCER_SLOTS, "balancer",
                           BALANCER_ALIASES)

    def synth_config(self):
        t = self._typed
        target = self.get("synth", "target_visits").strip().lower()
        kw = dict(n_subjects=t("synth", "n_subjects", int),
                  target_visits=None if target in ("none", "") else int(target),
                  prevalence_visit=t("synth", "prevalence_visit", float),
                  seed=self.seed)
        try:
            return SynthConfig(**kw) if t("synth", "signal", bool) else null_config(**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def sweep_config(self):
        t = self._typed
        try:
            split = tuple(float(v) for v in self.get("grid", "split").split(","))
        except ValueError:
            raise ConfigError("grid.split must be three comma-separated fractions") from None
        try:
            return SweepConfig(
                seed=self.seed, folds=t("grid", "folds", int), split=split,
                threshold_mode=self.get("run", "threshold_mode"),
                grid=self.get("grid", "preset"),
                models=self.models(), routes=self.routes(), balancers=self.balancers(),
                k_neighbors=t("preprocess", "k_neighbors", int),
                missing_threshold=t("preprocess", "missing_threshold", float),
                mice_max_iter=t("preprocess", "mice_max_iter", int),
                mice_tol=t("preprocess", "mice_tol", float),
                mice_ridge=t("preprocess", "mice_ridge", float),
                rfe_trees=t("grid", "rfe_trees", int),
                rfe_max_depth=t("grid", "rfe_max_depth", "opt_int"),
                rfecv_trees=t("grid", "rfecv_trees", int),
                rfecv_max_depth=t("grid", "rfecv_max_depth", int),
                rfecv_learning_rate=t("grid", "rfecv_learning_rate", float),
                mlp_max_epochs=t("grid", "mlp_max_epochs", int),
                n_boot=t("bootstrap", "n_boot", int),
                ci_level=t("bootstrap", "ci_level", float),
                jobs=t("run", "jobs", int),
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def explain_settings(self):
        t = self._typed
        out = {k: t("explain", k, int) for k in ("background_size", "n_permutations", "max_rows")}
        if out["n_permutations"] < 2:
            raise ConfigError("explain.n_permutations must be at least 2")
        return out

    def resolved(self):
        """Copy with list-valued keys expanded to explicit canonical lists."""
        out = RunConfig(self.parser)
        out.parser.set("grid", "models", ",".join(self.models()))
        out.parser.set("grid", "features", ",".join(self.routes()))
        out.parser.set("grid", "balancers", ",".join(self.balancers()))
        return out

    def dumps(self):
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()
