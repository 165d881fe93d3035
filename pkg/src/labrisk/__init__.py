"""Cancer-risk classification from routine lab panels under class imbalance:
cohort curation, preprocessing, class balancing, feature selection, model
benchmarking, evaluation and Shapley attributions."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: E402
