"""Sparse and fused regression with high-cardinality categorical predictors."""
from .bcd import BcdConfig, FitResult, fit, fit_bcd, fit_bcd_active_set, fit_logistic_bcd
from .dp import WeightedSequence, brute_force_univariate, dp_seg_pen_l0, solve_unsorted
from .model import (
    CategoricalSchema,
    Coefficients,
    DataError,
    Dataset,
    PenaltyConfig,
    canonicalize_baseline,
    clustering_of,
    objective,
)

__all__ = [
    "BcdConfig", "CategoricalSchema", "Coefficients", "DataError", "Dataset", "FitResult",
    "PenaltyConfig", "WeightedSequence", "brute_force_univariate", "canonicalize_baseline",
    "clustering_of", "dp_seg_pen_l0", "fit", "fit_bcd", "fit_bcd_active_set", "fit_logistic_bcd",
    "objective", "solve_unsorted",
]
