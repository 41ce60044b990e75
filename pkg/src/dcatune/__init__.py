"""dcatune: bilevel hyperparameter tuning by a penalized DC algorithm.

The training problem's penalty weights are decoupled into budget
variables ``r`` (``P_i(x) <= r_i``), making the lower level jointly
convex; the resulting single-level program with the value-function
constraint ``l(x) - v(r) <= 0`` is solved by successive strongly convex
subproblems with an adaptive exact penalty.  Everything runs on a
built-in conic ADMM kernel.
"""

__version__ = "0.1.0"

from .pieces import (
    Affine,
    BilevelSpec,
    BoxGap,
    HingeSum,
    Iterate,
    L1Norm,
    L2Norm,
    QuadLoss,
    SquaredL2,
    eval_piece,
    feasibility_gap,
    penalty_vector,
)

__all__ = [
    "__version__",
    "Affine",
    "BilevelSpec",
    "BoxGap",
    "HingeSum",
    "Iterate",
    "L1Norm",
    "L2Norm",
    "QuadLoss",
    "SquaredL2",
    "eval_piece",
    "feasibility_gap",
    "penalty_vector",
]
