"""Numerical engines: simplex LP, projections, box/ellipsoid linear maximization,
cutting planes and the pluggable conic backend."""

from .conic import ConicProgram, ConstraintBlock, register_backend, registered_backends, solve_conic
from .cutting_plane import OracleResult, cutting_plane_min
from .linmax import maximize_linear, minimize_dual
from .lp import EQ, GE, LE, LinearProgram, SolveOutcome, Status, solve_lp
from .projection import EllipsoidGeometry, dykstra_project, project_box, project_ellipsoid

__all__ = [
    "ConicProgram", "ConstraintBlock", "register_backend", "registered_backends", "solve_conic",
    "OracleResult", "cutting_plane_min", "maximize_linear", "minimize_dual",
    "EQ", "GE", "LE", "LinearProgram", "SolveOutcome", "Status", "solve_lp",
    "EllipsoidGeometry", "dykstra_project", "project_box", "project_ellipsoid",
]
