"""Conic program representation, interior-point solving, and bisection."""

from .program import ConicProgram, PSDCone, ProgramError
from .solve import DEFAULT_TOLERANCES, SolveReport, solve
from .bisect import BisectionError, BisectionResult, feasibility_bisection, \
    margin_feasible

__all__ = [
    "ConicProgram", "PSDCone", "ProgramError",
    "DEFAULT_TOLERANCES", "SolveReport", "solve",
    "BisectionError", "BisectionResult", "feasibility_bisection",
    "margin_feasible",
]
