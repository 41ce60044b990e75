"""Structured convex kernel: cone programs solved by operator splitting."""

from .backend import ACTIVE, HAVE_COMPILED
from .cones import NONNEG, SOC, ZERO, ConeBlock, project_blocks, project_cone, project_soc
from .program import (
    INFEASIBLE,
    MAX_ITERS,
    OPTIMAL,
    ConeProgram,
    SolveOptions,
    SolveResult,
)
from .solver import KernelSolver, solve

__all__ = [
    "ACTIVE",
    "HAVE_COMPILED",
    "ConeBlock",
    "ConeProgram",
    "SolveOptions",
    "SolveResult",
    "KernelSolver",
    "solve",
    "project_cone",
    "project_soc",
    "project_blocks",
    "ZERO",
    "NONNEG",
    "SOC",
    "OPTIMAL",
    "MAX_ITERS",
    "INFEASIBLE",
]
