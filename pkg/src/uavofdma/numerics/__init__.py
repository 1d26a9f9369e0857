"""Generic solvers used by the allocation and trajectory steps."""

from .ellipsoid import Ellipsoid, EmptyEllipsoid, NumericalBreakdown, ellipsoid_step, volume_ratio_bound
from .lp import LinearProgram, LpResult, LpStatus, solve_lp
from .qcqp import ConvexQcqp, NotPositiveSemidefinite, QcqpResult, QcqpStatus, solve_qcqp

__all__ = [
    "Ellipsoid", "EmptyEllipsoid", "NumericalBreakdown", "ellipsoid_step", "volume_ratio_bound",
    "LinearProgram", "LpResult", "LpStatus", "solve_lp",
    "ConvexQcqp", "NotPositiveSemidefinite", "QcqpResult", "QcqpStatus", "solve_qcqp",
]
