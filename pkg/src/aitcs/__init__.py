"""Adaptively iterative thresholding (AIT) for sparse recovery.

The main entry points are :func:`solve` with a :class:`SolverConfig`, the
matrix constants in :mod:`aitcs.analysis`, seeded problems from
:func:`generate`, and the experiment drivers in :mod:`aitcs.experiments`.
"""
__version__ = "0.1.0"

from .thresholding import OPERATOR_NAMES, ThresholdingOperator, get_operator, apply_vector
from .solver import SolverConfig, SolveResult, solve, normalize_columns, denormalize_solution
from .probgen import ProblemSpec, Problem, generate, relative_error, is_success
from .analysis import NormPair, coherence, ric, gric, analyze, BudgetExceeded
from .baselines import OmpConfig, omp_solve

__all__ = [
    "__version__",
    "OPERATOR_NAMES", "ThresholdingOperator", "get_operator", "apply_vector",
    "SolverConfig", "SolveResult", "solve", "normalize_columns", "denormalize_solution",
    "ProblemSpec", "Problem", "generate", "relative_error", "is_success",
    "NormPair", "coherence", "ric", "gric", "analyze", "BudgetExceeded",
    "OmpConfig", "omp_solve",
]
