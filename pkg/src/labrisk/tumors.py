"""Raw tumor-type names from both diagnosis sources and their standardized categories."""

import logging
import re

logger = logging.getLogger(__name__)

CATEGORIES = (
    "adenocarcinoma_anal_sac", "adenocarcinoma_mammary", "adenocarcinoma_other",
    "basal_cell_tumor", "benign_skin_tumor", "carcinoma_gastric", "carcinoma_hepatic",
    "carcinoma_mammary", "carcinoma_nasal", "carcinoma_neuroendocrine", "carcinoma_other",
    "carcinoma_ovarian", "carcinoma_pulmonary", "carcinoma_skin", "carcinoma_squamous",
    "carcinoma_thyroid", "carcinoma_urinary", "chondrosarcoma", "cns_tumor", "eye_tumor",
    "eyelid_tumor", "gist", "hair_follicle_tumor", "hemangiosarcoma", "histiocytic_sarcoma",
    "leiomyosarcoma", "leukemia", "liposarcoma", "liver_tumor", "lymphoma", "mammary_tumor",
    "mast_cell_tumor", "melanoma", "nasal_tumor", "neuroblastoma", "osteosarcoma",
    "perianal_adenoma", "plasma_cell_neoplasm", "rhabdomyosarcoma", "skin_appendage_tumor",
    "soft_tissue_sarcoma", "spleen_tumor", "testicular_tumor", "thymoma", "unknown_neoplasia",
)
UNKNOWN = "unknown_neoplasia"

# Endpoint-source names, with the category each collapses to.
ENDPOINT_TYPES = {
    "Acanthomatous ameloblastoma": "unknown_neoplasia",
    "Adenocarcinoma - apocrine gland anal sac": "adenocarcinoma_anal_sac",
    "Adenocarcinoma - exocrine pancreatic": "adenocarcinoma_other",
    "Adenocarcinoma - mammary": "adenocarcinoma_mammary",
    "Adenocarcinoma - other/not specified": "adenocarcinoma_other",
    "Anaplastic sarcoma": "soft_tissue_sarcoma",
    "Apocrine gland ductal adenoma": "benign_skin_tumor",
    "Brain tumor": "cns_tumor",
    "Carcinoma - basal cell": "carcinoma_skin",
    "Carcinoma - basosquamous cell": "carcinoma_skin",
    "Carcinoma - choroid plexus": "cns_tumor",
    "Carcinoma - gastric": "carcinoma_gastric",
    "Carcinoma - hepatocellular": "carcinoma_hepatic",
    "Carcinoma - mammary": "carcinoma_mammary",
    "Carcinoma - nasal": "carcinoma_nasal",
    "Carcinoma - neuroendocrine": "carcinoma_neuroendocrine",
    "Carcinoma - other/not specified": "carcinoma_other",
    "Carcinoma - ovarian": "carcinoma_ovarian",
    "Carcinoma - pulmonary": "carcinoma_pulmonary",
    "Carcinoma - squamous cell": "carcinoma_squamous",
    "Carcinoma - thyroid": "carcinoma_thyroid",
    "Carcinoma - transitional cell": "carcinoma_urinary",
    "Carcinosarcoma - thyroid": "carcinoma_thyroid",
    "Chondrosarcoma": "chondrosarcoma",
    "CNS tumor": "cns_tumor",
    "Cutaneous melanoma": "melanoma",
    "Gastrointestinal stromal tumor": "gist",
    "Hemangiosarcoma - cardiac": "hemangiosarcoma",
    "Hemangiosarcoma - cutaneous": "hemangiosarcoma",
    "Hemangiosarcoma - other/not specified": "hemangiosarcoma",
    "Hemangiosarcoma - splenic": "hemangiosarcoma",
    "Hemangiosarcoma - visceral": "hemangiosarcoma",
    "Histiocytic sarcoma": "histiocytic_sarcoma",
    "Leiomyosarcoma": "leiomyosarcoma",
    "Leukemia": "leukemia",
    "Liposarcoma": "liposarcoma",
    "Liver tumor": "liver_tumor",
    "Lymphoma - cutaneous": "lymphoma",
    "Lymphoma - gastrointestinal": "lymphoma",
    "Lymphoma - multicentric": "lymphoma",
    "Lymphoma - other/not specified": "lymphoma",
    "Malignant melanoma": "melanoma",
    "Malignant pilomatricoma": "hair_follicle_tumor",
    "Malignant trichoepithelioma": "skin_appendage_tumor",
    "Mast cell tumor - cutaneous": "mast_cell_tumor",
    "Mast cell tumor - other/not specified": "mast_cell_tumor",
    "Mast cell tumor - subcutaneous": "mast_cell_tumor",
    "Meibomian gland epithelioma": "eyelid_tumor",
    "Meningioma": "cns_tumor",
    "Metastatic sarcoma": "soft_tissue_sarcoma",
    "Multiple myeloma": "plasma_cell_neoplasm",
    "Myelodysplastic syndrome": "leukemia",
    "Nasal sarcoma": "nasal_tumor",
    "Nasal tumor": "nasal_tumor",
    "Nephroblastoma": "neuroblastoma",
    "Oral melanoma": "melanoma",
    "Osteosarcoma - appendicular": "osteosarcoma",
    "Osteosarcoma - axial": "osteosarcoma",
    "Osteosarcoma - other/unspecified": "osteosarcoma",
    "Pituitary adenoma": "cns_tumor",
    "Plasma cell tumor": "plasma_cell_neoplasm",
    "Rhabdomyosarcoma": "rhabdomyosarcoma",
    "Round cell tumor": "unknown_neoplasia",
    "Sarcoma": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - fibrosarcoma": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - giant cell tumor": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - keloidal": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - myxosarcoma": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - other/not specified": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - perivascular wall tumor": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - peripheral nerve sheath tumor": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - spindle cell sarcoma": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - synovial cell sarcoma": "soft_tissue_sarcoma",
    "Soft tissue sarcoma - undifferentiated sarcoma": "soft_tissue_sarcoma",
    "Spleen tumor": "spleen_tumor",
    "Testicular tumor": "testicular_tumor",
    "Thymoma": "thymoma",
    "Undifferentiated malignant neoplasm": "unknown_neoplasia",
    "Unknown neoplasia": "unknown_neoplasia",
}

# Condition-source indicator columns, with their categories.
CONDITION_TYPES = {
    "adrenal_tumor": "carcinoma_other",
    "basal_cell_tumor": "basal_cell_tumor",
    "bile_duct_tumor": "liver_tumor",
    "bladder_tumor": "carcinoma_urinary",
    "brain_spinal_cord_tumor": "cns_tumor",
    "breast_or_mammary_tumor": "mammary_tumor",
    "eye_tumor": "eye_tumor",
    "hair_matrix_tumor": "hair_follicle_tumor",
    "heart_tumor": "unknown_neoplasia",
    "hemangiosarcoma": "hemangiosarcoma",
    "histiocytic_sarcoma": "histiocytic_sarcoma",
    "kidney_tumor": "carcinoma_urinary",
    "leukemia": "leukemia",
    "liver_tumor": "liver_tumor",
    "lung_tumor": "carcinoma_pulmonary",
    "lymphoma": "lymphoma",
    "mast_cell_tumor": "mast_cell_tumor",
    "melanoma": "melanoma",
    "multiple_myeloma": "plasma_cell_neoplasm",
    "nasal_tumor": "nasal_tumor",
    "osteosarcoma": "osteosarcoma",
    "pancreatic_tumor": "adenocarcinoma_other",
    "perianal_adenoma": "perianal_adenoma",
    "pituitary_tumor": "cns_tumor",
    "plasma_cell_tumor": "plasma_cell_neoplasm",
    "plasmacytoma": "plasma_cell_neoplasm",
    "prostate_tumor": "carcinoma_urinary",
    "soft_tissue_sarcoma": "soft_tissue_sarcoma",
    "splenic_tumor": "spleen_tumor",
    "squamous_cell_carcinoma": "carcinoma_squamous",
    "stomach_intestinal_tumor": "carcinoma_gastric",
    "testicular_tumor": "testicular_tumor",
    "thymoma": "thymoma",
    "thyroid_tumor": "carcinoma_thyroid",
}


def _key(raw):
    s = str(raw).strip().lower()
    s = re.sub(r"\s*[–—-]\s*", " - ", s)  # en/em dash variants of the separator
    return re.sub(r"\s+", " ", s)


_LOOKUP = {_key(k): v for k, v in ENDPOINT_TYPES.items()}
_LOOKUP.update({_key(k): v for k, v in CONDITION_TYPES.items()})
_LOOKUP.update({_key(c): c for c in CATEGORIES})
_LOOKUP.update({_key(c.replace("_", " ")): c for c in CATEGORIES})


def standardize_tumor_type(raw, warn=None):
    """Map a raw tumor name from either source to its standardized category.

    Site-qualified names ("X - site") fall back to their base name. Unknown
    names map to ``unknown_neoplasia`` and trigger ``warn`` (default: log).
    """
    key = _key(raw)
    if key in _LOOKUP:
        return _LOOKUP[key]
    base = key.split(" - ")[0]
    if base in _LOOKUP:
        return _LOOKUP[base]
    prefixed = [k for k in _LOOKUP if k.startswith(base + " - ")]
    cats = {_LOOKUP[k] for k in prefixed}
    if len(cats) == 1:
        return cats.pop()
    msg = f"unrecognised tumor type {raw!r} mapped to {UNKNOWN}"
    (warn or logger.warning)(msg)
    return UNKNOWN
