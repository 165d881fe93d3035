"""Cohort assembly: cancer ascertainment from two diagnosis sources, visit
labeling relative to the first diagnosis, CSV ingest/export, and a seeded
generator for cohorts with the same shape.

Frames
------
subjects    subject_id, sex, birth_date
visits      subject_id, visit_date, <lab columns>, age_at_visit, sex, tumor_label
diagnoses   subject_id, tumor_type_raw, tumor_type_std, diagnosis_date, source, tier

Dates are pandas ``datetime64[ns]`` normalized to midnight.
"""

import datetime as dt
import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .features import ENGINEERED_FEATURES, LAB_FEATURES
from .tumors import CONDITION_TYPES, ENDPOINT_TYPES, standardize_tumor_type

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
DIAGNOSIS_COLUMNS = ("subject_id", "tumor_type_raw", "tumor_type_std", "diagnosis_date",
                     "source", "tier")
VISIT_KEYS = ("subject_id", "visit_date")
CURATED_TAIL = ("age_at_visit", "sex", "tumor_label")
CONDITION_META = ("subject_id", "record_date", "to_date", "any")
DEFAULT_BRACKETS = ((0.0, 2.0), (2.0, 4.0), (4.0, 6.0), (6.0, 8.0), (8.0, float("inf")))


class CohortError(ValueError):
    """Fatal schema or configuration problem."""


class CurationLog:
    """Collects non-fatal curation warnings and counters for the run report."""

    def __init__(self):
        self.warnings = []
        self.counts = {}

    def warn(self, msg):
        logger.warning(msg)
        self.warnings.append(msg)

    def count(self, key, n=1):
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def to_dict(self):
        return {"warnings": list(self.warnings), "counts": dict(self.counts)}


def _log(log):
    return log if log is not None else CurationLog()


@dataclass
class RawSources:
    """Diagnosis tables as they appear on disk (before ascertainment)."""

    endpoint: pd.DataFrame
    condition: pd.DataFrame


@dataclass
class Cohort:
    subjects: pd.DataFrame
    visits: pd.DataFrame
    diagnoses: pd.DataFrame
    sources: RawSources | None = field(default=None, compare=False)

    @property
    def lab_columns(self):
        return [c for c in self.visits.columns if c in LAB_FEATURES or c in ENGINEERED_FEATURES]

    def equals(self, other):
        return all(a.reset_index(drop=True).equals(b.reset_index(drop=True)) for a, b in (
            (self.subjects, other.subjects), (self.visits, other.visits),
            (self.diagnoses, other.diagnoses)))

    def summary(self):
        y = self.visits["tumor_label"]
        return {
            "n_subjects": int(len(self.subjects)),
            "n_visits": int(len(self.visits)),
            "n_cancer_subjects": int(len(self.diagnoses)),
            "n_positive_visits": int(y.sum()),
            "positive_fraction": float(y.mean()) if len(y) else 0.0,
            "diagnosis_sources": {k: int(v) for k, v in
                                  self.diagnoses["source"].value_counts().sort_index().items()},
        }


# -- dates -----------------------------------------------------------------------

_DATE_TOKEN = re.compile(r"\d{4}[-/.]\d{1,2}[-/.]\d{1,2}")


def parse_record_dates(text):
    """All dates in a free-form multi-date string, e.g. ``"2016-03-01; 2017-03-05"``.

    Raises ValueError when no token parses or any token is not a real date.
    """
    if text is None or (isinstance(text, float) and np.isnan(text)):
        raise ValueError("empty record_date")
    tokens = _DATE_TOKEN.findall(str(text))
    if not tokens:
        raise ValueError(f"no date in {text!r}")
    out = []
    for tok in tokens:
        y, m, d = (int(p) for p in re.split(r"[-/.]", tok))
        out.append(dt.date(y, m, d))
    return out


def _to_datetime(series, what, log, frame_name):
    parsed = pd.to_datetime(series, errors="coerce", format="%Y-%m-%d")
    bad = parsed.isna() & series.notna()
    if bad.any():
        log.warn(f"{frame_name}: {int(bad.sum())} unparseable {what} value(s) rejected")
    return parsed


def _empty_diagnoses():
    return pd.DataFrame({
        "subject_id": pd.Series(dtype=object),
        "tumor_type_raw": pd.Series(dtype=object),
        "tumor_type_std": pd.Series(dtype=object),
        "diagnosis_date": pd.Series(dtype="datetime64[ns]"),
        "source": pd.Series(dtype=object),
        "tier": pd.Series(dtype="Int64"),
    })


def _diagnosis_frame(rows):
    if not rows:
        return _empty_diagnoses()
    df = pd.DataFrame(rows, columns=list(DIAGNOSIS_COLUMNS))
    df["diagnosis_date"] = pd.to_datetime(df["diagnosis_date"]).astype("datetime64[ns]")
    df["tier"] = pd.array(df["tier"], dtype="Int64")
    df["subject_id"] = df["subject_id"].astype(str)
    return df.sort_values(["subject_id", "diagnosis_date", "tumor_type_std", "tumor_type_raw"],
                          kind="mergesort").reset_index(drop=True)


# -- ascertainment ------------------------------------------------------------------

def endpoint_diagnoses(endpoint_rows, log=None):
    """Endpoint-source rows -> diagnosis records (every tier kept)."""
    log = _log(log)
    _require(endpoint_rows, ("subject_id", "tumor_type", "diagnosis_date"), "endpoint")
    rows = []
    for rec in endpoint_rows.itertuples(index=False):
        raw_date = getattr(rec, "diagnosis_date")
        try:
            date = dt.date.fromisoformat(str(raw_date).strip())
        except ValueError:
            log.warn(f"endpoint: subject {rec.subject_id}: unparseable diagnosis_date "
                     f"{raw_date!r}; row rejected")
            continue
        tier = getattr(rec, "tier", None)
        tier = None if tier is None or pd.isna(tier) else int(tier)
        raw = str(rec.tumor_type)
        rows.append((str(rec.subject_id), raw, standardize_tumor_type(raw, log.warn), date,
                     "endpoint", tier))
    return _diagnosis_frame(rows)


def approximate_diagnosis_dates(condition_rows, log=None):
    """Condition-source rows -> one diagnosis record per (subject, tumor).

    Keeps rows with ``to_date == 0`` (newly diagnosed that study year); the
    diagnosis date is the earliest date found in any ``record_date`` string for
    the pair. Rows whose ``record_date`` does not parse are rejected with a
    warning.
    """
    log = _log(log)
    _require(condition_rows, ("subject_id", "record_date", "to_date"), "condition")
    tumor_cols = [c for c in condition_rows.columns if c not in CONDITION_META]
    to_date = pd.to_numeric(condition_rows["to_date"], errors="coerce")
    fresh = condition_rows[(to_date == 0).to_numpy()]
    flags = fresh[tumor_cols].apply(pd.to_numeric, errors="coerce").eq(1).to_numpy()
    earliest = {}
    for sid, text, row_flags in zip(fresh["subject_id"].astype(str), fresh["record_date"], flags):
        if not row_flags.any():
            continue
        try:
            date = min(parse_record_dates(text))
        except ValueError as exc:
            log.warn(f"condition: subject {sid}: record_date {text!r} rejected ({exc})")
            continue
        for tumor in (tumor_cols[j] for j in np.flatnonzero(row_flags)):
            key = (sid, tumor)
            if key not in earliest or date < earliest[key]:
                earliest[key] = date
    rows = [(sid, tumor, standardize_tumor_type(tumor, log.warn), date, "condition", None)
            for (sid, tumor), date in earliest.items()]
    return _diagnosis_frame(rows)


def merge_cancer_sources(endpoint, condition):
    """Full outer union by subject; one first-cancer record per subject.

    A subject with any endpoint record keeps its earliest endpoint record;
    otherwise its earliest condition record. Same-date ties go to the
    alphabetically first standardized, then raw, tumor name.
    """
    parts = [df for df in (endpoint, condition) if len(df)]
    if not parts:
        return _empty_diagnoses()
    both = pd.concat(parts, ignore_index=True)
    both["_rank"] = (both["source"] != "endpoint").astype(int)
    both = both.sort_values(["subject_id", "_rank", "diagnosis_date", "tumor_type_std",
                             "tumor_type_raw"], kind="mergesort")
    first = both.groupby("subject_id", sort=True).head(1).drop(columns="_rank")
    out = first.reset_index(drop=True)
    out["tier"] = out["tier"].astype("Int64")
    return out[list(DIAGNOSIS_COLUMNS)]


# -- labeling ----------------------------------------------------------------------

def label_visits(cohort, log=None):
    """Label each visit 1 if on/after the subject's diagnosis date.

    A cancer subject with no visit on or after the date instead gets a single
    positive label on the last visit before it.
    """
    log = _log(log)
    visits = cohort.visits.sort_values(list(VISIT_KEYS), kind="mergesort").reset_index(drop=True)
    dx = cohort.diagnoses.set_index("subject_id")["diagnosis_date"]
    dates = visits["subject_id"].map(dx)
    label = (visits["visit_date"] >= dates).to_numpy()
    has_dx = dates.notna().to_numpy()
    sid = visits["subject_id"].to_numpy()

    any_after = pd.Series(label).groupby(sid).transform("any").to_numpy()
    before = has_dx & ~label
    # last pre-diagnosis visit: the final visit of subjects with nothing on/after
    is_last = ~pd.Series(sid).duplicated(keep="last").to_numpy()
    label = label | (before & ~any_after & is_last)

    for s in sorted(set(dx.index) - set(sid)):
        log.warn(f"cancer subject {s} has no visits; no labels emitted")
    visits["tumor_label"] = label.astype(np.int64)
    return Cohort(cohort.subjects, visits, cohort.diagnoses, cohort.sources)


# -- ingest / export ------------------------------------------------------------------

def _require(df, cols, name):
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise CohortError(f"{name}: missing mandatory column(s) {', '.join(missing)}")


def _read_csv(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return pd.read_csv(path, dtype={"subject_id": str}, float_precision="round_trip",
                       keep_default_na=True)


def read_sources(visits_path, demographics_path, endpoint_path, condition_path):
    visits = _read_csv(visits_path)
    demo = _read_csv(demographics_path)
    endpoint = _read_csv(endpoint_path)
    condition = _read_csv(condition_path)
    return visits, demo, RawSources(endpoint, condition)


def assemble_cohort(visits_raw, demographics, sources, log=None):
    """Validate and join the raw tables, then ascertain, merge and label."""
    log = _log(log)
    _require(visits_raw, VISIT_KEYS, "visits")
    _require(demographics, ("subject_id", "sex", "birth_date"), "demographics")
    extra = [c for c in visits_raw.columns
             if c not in VISIT_KEYS and c not in LAB_FEATURES and c not in ENGINEERED_FEATURES]
    if extra:
        raise CohortError(f"visits: unknown feature column(s) {', '.join(extra)}")
    labs = [c for c in LAB_FEATURES + ENGINEERED_FEATURES if c in visits_raw.columns]

    subjects = demographics[["subject_id", "sex", "birth_date"]].copy()
    subjects["subject_id"] = subjects["subject_id"].astype(str)
    subjects["sex"] = subjects["sex"].astype(str).str.strip().str.lower()
    bad_sex = ~subjects["sex"].isin(("male", "female"))
    if bad_sex.any():
        raise CohortError(f"demographics: sex must be male/female, got "
                          f"{sorted(subjects.loc[bad_sex, 'sex'].unique())}")
    subjects["birth_date"] = _to_datetime(subjects["birth_date"], "birth_date", log, "demographics")
    if subjects["birth_date"].isna().any():
        raise CohortError("demographics: every subject needs a valid birth_date")
    if subjects["subject_id"].duplicated().any():
        raise CohortError("demographics: duplicate subject_id")
    subjects = subjects.sort_values("subject_id", kind="mergesort").reset_index(drop=True)

    visits = visits_raw[list(VISIT_KEYS) + labs].copy()
    visits["subject_id"] = visits["subject_id"].astype(str)
    visits["visit_date"] = _to_datetime(visits["visit_date"], "visit_date", log, "visits")
    undated = visits["visit_date"].isna()
    if undated.any():
        log.count("visits_dropped_bad_date", undated.sum())
        visits = visits[~undated]
    for c in labs:
        visits[c] = pd.to_numeric(visits[c], errors="coerce").astype(np.float64)
    dup = visits.duplicated(list(VISIT_KEYS), keep="first")
    if dup.any():
        log.warn(f"visits: {int(dup.sum())} duplicate (subject_id, visit_date) row(s) dropped")
        log.count("visits_dropped_duplicate", dup.sum())
        visits = visits[~dup]
    orphan = ~visits["subject_id"].isin(subjects["subject_id"])
    if orphan.any():
        log.warn(f"visits: {int(orphan.sum())} row(s) for subjects absent from demographics dropped")
        log.count("visits_dropped_orphan", orphan.sum())
        visits = visits[~orphan]
    visits = visits.merge(subjects, on="subject_id", how="left", validate="many_to_one")
    days = (visits["visit_date"] - visits["birth_date"]).dt.days
    early = days < 0
    if early.any():
        log.warn(f"visits: {int(early.sum())} visit(s) dated before birth dropped")
        log.count("visits_dropped_before_birth", early.sum())
        visits, days = visits[~early], days[~early]
    visits["age_at_visit"] = days.astype(np.float64) / DAYS_PER_YEAR
    visits = visits.drop(columns="birth_date")
    visits["tumor_label"] = np.zeros(len(visits), dtype=np.int64)
    visits = visits[list(VISIT_KEYS) + labs + list(CURATED_TAIL)]
    visits = visits.sort_values(list(VISIT_KEYS), kind="mergesort").reset_index(drop=True)

    ep = endpoint_diagnoses(sources.endpoint, log)
    cond = approximate_diagnosis_dates(sources.condition, log)
    dx = merge_cancer_sources(ep, cond)
    unknown = ~dx["subject_id"].isin(subjects["subject_id"])
    if unknown.any():
        log.warn(f"{int(unknown.sum())} diagnosed subject(s) absent from demographics ignored")
        dx = dx[~unknown].reset_index(drop=True)
    cohort = label_visits(Cohort(subjects, visits, dx, sources), log)
    s = cohort.summary()
    log.count("positive_visits", s["n_positive_visits"])
    log.count("visits", s["n_visits"])
    log.count("cancer_subjects", s["n_cancer_subjects"])
    return cohort


def ingest_csv(visits_path, demographics_path, endpoint_path, condition_path, log=None):
    visits, demo, sources = read_sources(visits_path, demographics_path, endpoint_path,
                                         condition_path)
    return assemble_cohort(visits, demo, sources, log)


def _fmt_dates(series):
    return series.dt.strftime("%Y-%m-%d")


def sources_from_diagnoses(diagnoses):
    """Render merged diagnoses back into the two on-disk source tables."""
    ep = diagnoses[diagnoses["source"] == "endpoint"]
    endpoint = pd.DataFrame({
        "subject_id": ep["subject_id"].to_numpy(),
        "tumor_type": ep["tumor_type_raw"].to_numpy(),
        "diagnosis_date": _fmt_dates(ep["diagnosis_date"]).to_numpy(),
        "tier": ep["tier"].astype("Int64").to_numpy(),
    })
    cd = diagnoses[diagnoses["source"] == "condition"]
    cols = sorted(set(CONDITION_TYPES) | set(cd["tumor_type_raw"]))
    condition = pd.DataFrame({
        "subject_id": cd["subject_id"].to_numpy(),
        "record_date": _fmt_dates(cd["diagnosis_date"]).to_numpy(),
        "to_date": np.zeros(len(cd), dtype=np.int64),
        "any": np.ones(len(cd), dtype=np.int64),
    })
    for c in cols:
        condition[c] = (cd["tumor_type_raw"].to_numpy() == c).astype(np.int64)
    return RawSources(endpoint, condition)


def write_cohort(cohort, directory):
    """Write visits/demographics/endpoint/condition CSVs; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = {k: os.path.join(directory, f"{k}.csv")
             for k in ("visits", "demographics", "endpoint", "condition")}
    visits = cohort.visits[list(VISIT_KEYS) + cohort.lab_columns].copy()
    visits["visit_date"] = _fmt_dates(visits["visit_date"])
    visits.to_csv(paths["visits"], index=False)
    demo = cohort.subjects.copy()
    demo["birth_date"] = _fmt_dates(demo["birth_date"])
    demo.to_csv(paths["demographics"], index=False)
    sources = cohort.sources or sources_from_diagnoses(cohort.diagnoses)
    sources.endpoint.to_csv(paths["endpoint"], index=False)
    sources.condition.to_csv(paths["condition"], index=False)
    return paths


def write_curated(cohort, path):
    visits = cohort.visits.copy()
    visits["visit_date"] = _fmt_dates(visits["visit_date"])
    visits.to_csv(path, index=False)


def read_curated(path):
    df = _read_csv(path)
    _require(df, VISIT_KEYS + CURATED_TAIL, "curated")
    df["visit_date"] = pd.to_datetime(df["visit_date"], format="%Y-%m-%d")
    df["tumor_label"] = df["tumor_label"].astype(np.int64)
    return df


def bracket_rates(visits, brackets=DEFAULT_BRACKETS):
    """Visit count and positive rate per age bracket ``[lo, hi)``."""
    age = visits["age_at_visit"].to_numpy()
    y = visits["tumor_label"].to_numpy()
    out = []
    for lo, hi in brackets:
        m = (age >= lo) & (age < hi)
        n = int(m.sum())
        out.append({"lo": lo, "hi": hi, "n_visits": n, "n_positive": int(y[m].sum()),
                    "rate": float(y[m].mean()) if n else 0.0})
    return out


# -- synthesis -----------------------------------------------------------------------

# Baseline distribution per directly simulated lab: ("normal", mean, sd) or
# ("lognormal", median, sigma of log). Ratio columns and total protein are
# derived from their components.
LAB_BASELINES = {
    "hematocrit": ("normal", 48.0, 4.5),
    "hemoglobin": ("normal", 16.5, 1.6),
    "mch": ("normal", 23.5, 1.0),
    "mchc": ("normal", 34.0, 1.0),
    "mcv": ("normal", 69.0, 2.5),
    "rbc": ("normal", 7.0, 0.6),
    "wbc": ("lognormal", 8.5, 0.30),
    "band_neutrophils": ("lognormal", 0.05, 0.8),
    "basophils": ("lognormal", 0.03, 0.8),
    "eosinophils": ("lognormal", 0.45, 0.5),
    "lymphocytes": ("lognormal", 2.0, 0.35),
    "monocytes": ("lognormal", 0.4, 0.45),
    "neutrophils": ("lognormal", 5.5, 0.35),
    "platelets": ("lognormal", 280.0, 0.30),
    "alp": ("lognormal", 45.0, 0.6),
    "alt": ("lognormal", 45.0, 0.45),
    "ast": ("lognormal", 30.0, 0.35),
    "albumin": ("normal", 3.4, 0.30),
    "globulin": ("normal", 3.0, 0.40),
    "amylase": ("lognormal", 700.0, 0.35),
    "bun": ("lognormal", 16.0, 0.30),
    "creatinine": ("normal", 1.1, 0.20),
    "calcium": ("normal", 10.2, 0.45),
    "chloride": ("normal", 113.0, 2.5),
    "cholesterol": ("lognormal", 250.0, 0.25),
    "creatine_kinase": ("lognormal", 140.0, 0.5),
    "ggt": ("lognormal", 4.0, 0.5),
    "glucose": ("normal", 95.0, 10.0),
    "lipase": ("lognormal", 400.0, 0.6),
    "magnesium": ("normal", 2.0, 0.15),
    "phosphorus": ("normal", 4.0, 0.7),
    "potassium": ("normal", 4.6, 0.35),
    "sodium": ("normal", 148.0, 2.5),
    "total_bilirubin": ("lognormal", 0.15, 0.5),
    "triglycerides": ("lognormal", 75.0, 0.5),
}

DERIVED_LABS = {
    "albumin_globulin_ratio": ("albumin", "globulin", "ratio"),
    "bun_creatinine_ratio": ("bun", "creatinine", "ratio"),
    "sodium_potassium_ratio": ("sodium", "potassium", "ratio"),
    "total_protein": ("albumin", "globulin", "sum"),
}

# Shared latent factors (loading per lab) giving the panel its correlations.
LAB_FACTORS = (
    {"hematocrit": 0.9, "hemoglobin": 0.9, "rbc": 0.85, "mchc": 0.3},
    {"mcv": 0.7, "mch": 0.7, "mchc": 0.3},
    {"wbc": 0.85, "neutrophils": 0.8, "monocytes": 0.4, "band_neutrophils": 0.3,
     "lymphocytes": 0.3},
    {"albumin": 0.4, "globulin": 0.5, "calcium": 0.3},
    {"bun": 0.6, "creatinine": 0.6, "phosphorus": 0.3},
    {"alt": 0.5, "ast": 0.4, "alp": 0.4, "ggt": 0.4},
    {"sodium": 0.5, "chloride": 0.5},
)

DEFAULT_SIGNAL = {
    "hematocrit": -0.5, "hemoglobin": -0.5, "rbc": -0.4, "neutrophils": 0.4, "wbc": 0.3,
    "lymphocytes": -0.3, "platelets": -0.3, "albumin": -0.4, "globulin": 0.4,
    "calcium": 0.2, "glucose": -0.2, "alp": 0.2,
}

DEFAULT_MISSINGNESS = {
    "band_neutrophils": 0.5905, "lipase": 0.5793, "amylase": 0.1752, "triglycerides": 0.1705,
    "basophils": 0.1631, "mch": 0.1618,
}
# These four go missing together (a partial chemistry panel).
PARTIAL_PANEL = ("sodium_potassium_ratio", "creatine_kinase", "albumin_globulin_ratio", "globulin")
PARTIAL_PANEL_RATE = 0.0145
BACKGROUND_MISSING_RATE = 0.005

DEFAULT_BRACKET_RATES = (0.0020, 0.0122, 0.0417, 0.1104, 0.1823)

_TUMOR_WEIGHTS = {  # endpoint raw name -> relative frequency
    "Hemangiosarcoma - splenic": 10, "Hemangiosarcoma - cardiac": 5,
    "Hemangiosarcoma - other/not specified": 5, "Mast cell tumor - cutaneous": 12,
    "Mast cell tumor - subcutaneous": 5, "Lymphoma - multicentric": 12,
    "Lymphoma - gastrointestinal": 3, "Soft tissue sarcoma - other/not specified": 6,
    "Soft tissue sarcoma - fibrosarcoma": 3, "Histiocytic sarcoma": 5, "Malignant melanoma": 2,
    "Oral melanoma": 1, "CNS tumor": 3, "Osteosarcoma - appendicular": 2, "Leukemia": 2,
    "Carcinoma - thyroid": 1, "Adenocarcinoma - apocrine gland anal sac": 1,
    "Carcinoma - transitional cell": 1, "Unknown neoplasia": 2,
}
_CONDITION_WEIGHTS = {
    "hemangiosarcoma": 10, "mast_cell_tumor": 8, "lymphoma": 8, "soft_tissue_sarcoma": 5,
    "histiocytic_sarcoma": 3, "melanoma": 2, "eye_tumor": 3, "brain_spinal_cord_tumor": 2,
    "osteosarcoma": 1, "leukemia": 1, "thyroid_tumor": 1, "splenic_tumor": 2,
}


@dataclass
class SynthConfig:
    n_subjects: int = 3044
    target_visits: int | None = 22460
    age_bracket_rates: tuple = tuple(zip(DEFAULT_BRACKETS, DEFAULT_BRACKET_RATES))
    prevalence_visit: float = 0.063
    signal_effects: dict = field(default_factory=lambda: dict(DEFAULT_SIGNAL))
    missingness_rates: dict | None = None
    seed: int = 0
    min_visits: int = 3
    max_visits: int = 11
    enroll_age: tuple = (0.3, 2.3)
    endpoint_fraction: float = 0.877
    male_share: float = 0.506
    lab_icc: float = 0.5
    study_start: str = "2012-06-01"
    enroll_window_days: int = 1000

    def __post_init__(self):
        if self.n_subjects < 2:
            raise CohortError("n_subjects must be >= 2")
        rates = [r for _, r in self.age_bracket_rates]
        for r in rates + [self.prevalence_visit, self.endpoint_fraction]:
            if not 0.0 <= r <= 1.0:
                raise CohortError(f"rate {r} outside [0, 1]")
        for f, r in (self.missingness_rates or {}).items():
            if not 0.0 <= r <= 1.0:
                raise CohortError(f"missingness rate for {f} outside [0, 1]")
        if not 1 <= self.min_visits <= self.max_visits:
            raise CohortError("need 1 <= min_visits <= max_visits")
        unknown = [f for f in self.signal_effects if f not in LAB_FEATURES]
        if unknown:
            raise CohortError(f"signal_effects for unknown lab(s): {unknown}")

    def resolved_missingness(self):
        if self.missingness_rates is not None:
            return {f: float(self.missingness_rates.get(f, 0.0)) for f in LAB_FEATURES}
        out = {f: BACKGROUND_MISSING_RATE for f in LAB_FEATURES}
        out.update(DEFAULT_MISSINGNESS)
        for f in PARTIAL_PANEL:
            out[f] = PARTIAL_PANEL_RATE
        return out


def null_config(**overrides):
    """No lab signal and the same positive rate in every age bracket."""
    base = SynthConfig(**overrides)
    p = base.prevalence_visit
    base.age_bracket_rates = tuple((b, p) for b, _ in base.age_bracket_rates)
    base.signal_effects = {}
    return base


def _visit_counts(cfg, rng):
    n, lo, hi = cfg.n_subjects, cfg.min_visits, cfg.max_visits
    counts = rng.integers(lo, hi + 1, n)
    if cfg.target_visits is None:
        return counts
    target = int(np.clip(cfg.target_visits, lo * n, hi * n))
    if target != cfg.target_visits:
        logger.warning("target_visits %d unreachable with %d subjects; using %d",
                       cfg.target_visits, n, target)
    diff = target - int(counts.sum())
    step = 1 if diff > 0 else -1
    while diff != 0:
        room = np.flatnonzero(counts < hi) if step > 0 else np.flatnonzero(counts > lo)
        take = rng.choice(room, size=min(abs(diff), len(room)), replace=False)
        counts[take] += step
        diff -= step * len(take)
    return counts


def _analytic_iqr(spec):
    kind, center, spread = spec
    if kind == "normal":
        return 2 * 0.6744897501960817 * spread
    return center * (np.exp(0.6744897501960817 * spread) - np.exp(-0.6744897501960817 * spread))


def _lab_correlation(names):
    idx = {f: i for i, f in enumerate(names)}
    load = np.zeros((len(names), len(LAB_FACTORS)))
    for k, fac in enumerate(LAB_FACTORS):
        for f, v in fac.items():
            load[idx[f], k] = v
    corr = load @ load.T
    corr[np.diag_indices_from(corr)] = 1.0
    return corr


def _calibrated_thresholds(u_visit, bracket_idx, rates):
    """Per-bracket cut-offs F_b (non-decreasing) so that the share of visits in
    bracket b with latent U < F_b is as close as possible to rate b."""
    cuts = []
    prev = 0.0
    for b, rate in enumerate(rates):
        u = np.sort(u_visit[bracket_idx == b])
        if len(u) == 0:
            cuts.append(prev)
            continue
        target = rate * len(u)
        vals, counts = np.unique(u, return_counts=True)
        cum = np.r_[0, np.cumsum(counts)]  # visits below each candidate cut
        edges = np.r_[vals[0] / 2.0, (vals[:-1] + vals[1:]) / 2.0, np.nextafter(vals[-1], 2.0)]
        best = int(np.argmin(np.abs(cum - target)))
        cut = float(edges[best])
        if cut < prev:
            logger.info("bracket %d rate %.4f below the previous bracket's; raised", b, rate)
            cut = prev
        cuts.append(cut)
        prev = cut
    return np.asarray(cuts)


def _pick(rng, weights, size):
    names = list(weights)
    p = np.asarray([weights[k] for k in names], dtype=np.float64)
    return [names[i] for i in rng.choice(len(names), size=size, p=p / p.sum())]


def synthesize_cohort(config):
    """Seeded cohort with annual visits, correlated labs and age-driven labels.

    Each subject carries a latent ``U ~ Uniform(0, 1)``; a visit in age bracket
    b is positive iff ``U < F_b`` where ``F_b`` is non-decreasing and
    calibrated so realized bracket rates match the configuration. Positives
    therefore form a suffix of each subject's visits. Diagnosis dates and the
    raw diagnosis tables are generated so that curation reproduces exactly
    these labels.
    """
    cfg = config
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    n = cfg.n_subjects
    ids = np.asarray([f"S{i:05d}" for i in range(1, n + 1)], dtype=object)
    sex = np.where(rng.random(n) < cfg.male_share, "male", "female")
    counts = _visit_counts(cfg, rng)

    start = np.datetime64(cfg.study_start, "D")
    enroll = start + rng.integers(0, cfg.enroll_window_days, n).astype("timedelta64[D]")
    enroll_age_days = np.round(rng.uniform(*cfg.enroll_age, n) * DAYS_PER_YEAR).astype(np.int64)
    birth = enroll - enroll_age_days.astype("timedelta64[D]")

    subj = np.repeat(np.arange(n), counts)
    k = np.concatenate([np.arange(c) for c in counts])
    jitter = np.clip(np.round(rng.normal(0.0, 15.0, len(k))), -45, 45).astype(np.int64)
    jitter[k == 0] = 0
    offset = np.round(k * DAYS_PER_YEAR).astype(np.int64) + jitter
    vdate = enroll[subj] + offset.astype("timedelta64[D]")
    age = (vdate - birth[subj]).astype(np.int64) / DAYS_PER_YEAR

    brackets = [b for b, _ in cfg.age_bracket_rates]
    rates = [r for _, r in cfg.age_bracket_rates]
    bidx = np.full(len(age), -1)
    for b, (lo, hi) in enumerate(brackets):
        bidx[(age >= lo) & (age < hi)] = b
    u = rng.random(n)
    cuts = _calibrated_thresholds(u[subj], bidx, rates)
    label = np.zeros(len(age), dtype=np.int64)
    inb = bidx >= 0
    label[inb] = (u[subj][inb] < cuts[bidx[inb]]).astype(np.int64)

    labs = _synth_labs(cfg, rng, subj, label)
    visits = pd.DataFrame({"subject_id": ids[subj], "visit_date": vdate.astype("datetime64[ns]")})
    for f in LAB_FEATURES:
        visits[f] = labs[f]
    visits["age_at_visit"] = age
    visits["sex"] = sex[subj]
    visits["tumor_label"] = label

    subjects = pd.DataFrame({"subject_id": ids, "sex": sex,
                             "birth_date": birth.astype("datetime64[ns]")})
    sources = _synth_sources(cfg, rng, ids, subj, vdate, label)
    cohort = assemble_cohort(
        visits[list(VISIT_KEYS) + list(LAB_FEATURES)].assign(
            visit_date=_fmt_dates(visits["visit_date"])),
        subjects.assign(birth_date=_fmt_dates(subjects["birth_date"])),
        sources,
    )
    if not np.array_equal(cohort.visits["tumor_label"].to_numpy(), label):
        raise AssertionError("synthetic diagnoses do not reproduce the planted labels")
    return cohort


def _synth_labs(cfg, rng, subj, label):
    names = list(LAB_BASELINES)
    corr = _lab_correlation(names)
    chol = np.linalg.cholesky(corr)
    n_sub = int(subj.max()) + 1
    nv = len(subj)
    share = cfg.lab_icc  # fraction of variance that is stable within a subject
    s = rng.standard_normal((n_sub, len(names))) @ chol.T
    e = rng.standard_normal((nv, len(names))) @ chol.T
    z = np.sqrt(share) * s[subj] + np.sqrt(1.0 - share) * e
    out = {}
    for j, f in enumerate(names):
        kind, center, spread = LAB_BASELINES[f]
        if kind == "normal":
            x = center + spread * z[:, j]
        else:
            x = center * np.exp(spread * z[:, j])
        x = x + label * cfg.signal_effects.get(f, 0.0) * _analytic_iqr(LAB_BASELINES[f])
        out[f] = np.maximum(x, 0.01 * center)
    for f, (a, b, op) in DERIVED_LABS.items():
        out[f] = out[a] / out[b] if op == "ratio" else out[a] + out[b]
        effect = cfg.signal_effects.get(f, 0.0)
        if effect:
            med = np.median(out[f])
            q1, q3 = np.percentile(out[f], [25, 75])
            out[f] = np.maximum(out[f] + label * effect * (q3 - q1), 0.01 * med)
    miss = cfg.resolved_missingness()
    panel = rng.random(nv)
    for f in LAB_FEATURES:
        draw = rng.random(nv)
        if cfg.missingness_rates is None and f in PARTIAL_PANEL:
            mask = panel < miss[f]
        else:
            mask = draw < miss[f]
        out[f] = np.where(mask, np.nan, out[f])
    return out


def _synth_sources(cfg, rng, ids, subj, vdate, label):
    n = len(ids)
    first_pos = np.full(n, -1)
    order = np.arange(len(subj))
    pos_rows = order[label == 1]
    # rows are grouped by subject in visit order, so the first positive row wins
    seen = set()
    for r in pos_rows:
        s = subj[r]
        if s not in seen:
            seen.add(s)
            first_pos[s] = r
    last_row = np.r_[np.flatnonzero(np.diff(subj)), len(subj) - 1]
    cancer = np.flatnonzero(first_pos >= 0)
    one_day = np.timedelta64(1, "D")

    dx_dates = {}
    for s in cancer:
        r = first_pos[s]
        is_first_visit = r == 0 or subj[r - 1] != s
        upper = vdate[r]
        lower = upper - np.timedelta64(365, "D") if is_first_visit else vdate[r - 1]
        if r == last_row[s] and not is_first_visit and rng.random() < 0.5:
            # diagnosed after the last lab visit: the last pre-diagnosis rule applies
            lower, upper = vdate[r], vdate[r] + np.timedelta64(365, "D")
        span = int((upper - lower) / one_day)
        dx_dates[s] = lower + int(rng.integers(1, span + 1)) * one_day

    from_endpoint = rng.random(len(cancer)) < cfg.endpoint_fraction
    ep_types = _pick(rng, _TUMOR_WEIGHTS, len(cancer))
    cond_types = _pick(rng, _CONDITION_WEIGHTS, len(cancer))
    tiers = rng.choice([1, 2, 3], size=len(cancer), p=[0.738, 0.169, 0.093])
    ep_rows, cond_rows = [], []
    for i, s in enumerate(cancer):
        d = dx_dates[s]
        if from_endpoint[i]:
            ep_rows.append((ids[s], ep_types[i], str(d), int(tiers[i])))
            if rng.random() < 0.1:  # questionnaire report of the same case, later
                cond_rows.append((ids[s], f"{d + 120 * one_day}", 0, cond_types[i]))
        else:
            later = d + int(rng.integers(200, 500)) * one_day
            cond_rows.append((ids[s], f"{later}; {d}", 0, cond_types[i]))
            if rng.random() < 0.3:  # follow-up questionnaire: not newly diagnosed
                cond_rows.append((ids[s], f"{later + 365 * one_day}", 1, cond_types[i]))
    endpoint = pd.DataFrame(ep_rows, columns=["subject_id", "tumor_type", "diagnosis_date", "tier"])
    tumor_cols = sorted(CONDITION_TYPES)
    condition = pd.DataFrame({
        "subject_id": [r[0] for r in cond_rows],
        "record_date": [r[1] for r in cond_rows],
        "to_date": np.asarray([r[2] for r in cond_rows], dtype=np.int64),
        "any": np.ones(len(cond_rows), dtype=np.int64),
    })
    for c in tumor_cols:
        condition[c] = np.asarray([int(r[3] == c) for r in cond_rows], dtype=np.int64)
    return RawSources(endpoint, condition)


def cohort_manifest(cohort, brackets=DEFAULT_BRACKETS):
    s = cohort.summary()
    s["brackets"] = bracket_rates(cohort.visits, brackets)
    return s


__all__ = [
    "Cohort", "CohortError", "CurationLog", "RawSources", "SynthConfig",
    "approximate_diagnosis_dates", "assemble_cohort", "bracket_rates", "endpoint_diagnoses",
    "ingest_csv", "label_visits", "merge_cancer_sources", "null_config",
    "parse_record_dates", "read_curated", "sources_from_diagnoses", "standardize_tumor_type",
    "synthesize_cohort", "write_cohort", "write_curated", "ENDPOINT_TYPES",
]
