"""Sparse partially linear models: SCAD-penalized profile least squares with B-splines."""

__version__ = "0.1.0"

from .errors import PLMError, PLMInputError, PLMNumericalError  # noqa: E402
from .optimizer import SolverOptions, objective_value, solve_penalized  # noqa: E402
from .penalty import PenaltySpec, penalty_derivative, penalty_value  # noqa: E402
from .plm import Dataset, FitConfig, PLMFit, fit_plm, predict_g  # noqa: E402
from .projection import ProjectionContext  # noqa: E402
from .spline_basis import (  # noqa: E402
    KnotPartition,
    SplineBasis,
    basis_matrix,
    evaluate_basis,
    make_quantile_partition,
)

__all__ = [
    "Dataset", "FitConfig", "KnotPartition", "PLMError", "PLMFit", "PLMInputError",
    "PLMNumericalError", "PenaltySpec", "ProjectionContext", "SolverOptions", "SplineBasis",
    "basis_matrix", "evaluate_basis", "fit_plm", "make_quantile_partition", "objective_value",
    "penalty_derivative", "penalty_value", "predict_g", "solve_penalized",
]
