"""Feature vocabulary for the routine CBC / chemistry panels.

Names are snake_case versions of the panel parameters. Visits files may only
carry lab columns from ``LAB_FEATURES``; ``age_at_visit`` and ``sex`` come from
demographics and the two ratios are engineered downstream.
"""

CBC_FEATURES = (
    "hematocrit",
    "hemoglobin",
    "mch",
    "mchc",
    "mcv",
    "rbc",
    "wbc",
    "band_neutrophils",
    "basophils",
    "eosinophils",
    "lymphocytes",
    "monocytes",
    "neutrophils",
    "platelets",
)

CHEM_FEATURES = (
    "alp",
    "alt",
    "ast",
    "albumin",
    "globulin",
    "albumin_globulin_ratio",
    "amylase",
    "bun",
    "creatinine",
    "bun_creatinine_ratio",
    "calcium",
    "chloride",
    "cholesterol",
    "creatine_kinase",
    "ggt",
    "glucose",
    "lipase",
    "magnesium",
    "phosphorus",
    "potassium",
    "sodium",
    "sodium_potassium_ratio",
    "total_bilirubin",
    "total_protein",
    "triglycerides",
)

LAB_FEATURES = CBC_FEATURES + CHEM_FEATURES
DEMOGRAPHIC_FEATURES = ("age_at_visit", "sex")
ENGINEERED_FEATURES = ("nlr", "plr")
ALL_FEATURES = DEMOGRAPHIC_FEATURES + LAB_FEATURES + ENGINEERED_FEATURES

# Passed through preprocessing unscaled (0 = male, 1 = female).
CATEGORICAL_FEATURES = ("sex",)

MANUAL_PANEL = (
    "age_at_visit",
    "hemoglobin",
    "platelets",
    "mchc",
    "wbc",
    "band_neutrophils",
    "lymphocytes",
    "albumin",
    "globulin",
    "albumin_globulin_ratio",
    "magnesium",
    "calcium",
    "sodium",
    "ggt",
    "glucose",
)

SEX_CODES = {"male": 0, "female": 1}
