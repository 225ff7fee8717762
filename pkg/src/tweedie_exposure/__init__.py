"""Exposure-aware Tweedie ratemaking with mid-term cancellation penalties."""

from tweedie_exposure.tweedie import (
    CompoundRepresentation,
    TweedieParams,
    sample,
    to_compound,
    unit_deviance,
    variance,
)
from tweedie_exposure.splines import (
    DEFAULT_KNOTS,
    ExposureCurve,
    KnotGrid,
    build_basis,
    evaluate,
    normalize,
    penalty_matrix,
)
from tweedie_exposure.portfolio import Portfolio, SyntheticSpec, load_csv, simulate, split, write_csv
from tweedie_exposure.fitting import FitResult, FitSpec, Scheme, fit
from tweedie_exposure.penalty import PenaltySchedule, adjust, constrain, refit_with_offset
from tweedie_exposure.evaluation import score
from tweedie_exposure.groups import bootstrap_curve_difference, search_cutpoint

__version__ = "0.1.0"

__all__ = [
    "CompoundRepresentation",
    "DEFAULT_KNOTS",
    "ExposureCurve",
    "FitResult",
    "FitSpec",
    "KnotGrid",
    "PenaltySchedule",
    "Portfolio",
    "Scheme",
    "SyntheticSpec",
    "TweedieParams",
    "adjust",
    "bootstrap_curve_difference",
    "build_basis",
    "constrain",
    "evaluate",
    "fit",
    "load_csv",
    "normalize",
    "penalty_matrix",
    "refit_with_offset",
    "sample",
    "score",
    "search_cutpoint",
    "simulate",
    "split",
    "to_compound",
    "unit_deviance",
    "variance",
    "write_csv",
]
