"""Second-order cone programs and the pluggable backend registry.

Data contract for backends: dense rows ``A x (rel) b``, variable bounds, and
cones given as ``(t, (i1, i2, ...))`` meaning ``||x[i1], x[i2], ...||_2 <= x[t]``.
A backend is any callable ``(program, tol) -> SolveOutcome``.

The environment variable POSSDRO_CONIC_BACKEND may name a backend either by
registered name (``cvxpy``) or by import path (``package.module:function``).
"""

from __future__ import annotations

import importlib
import os
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ModelError
from .lp import EQ, GE, LE, LinearProgram, SolveOutcome, Status, solve_lp

ENV_BACKEND = "POSSDRO_CONIC_BACKEND"


def _cone_tuple(cones) -> tuple:
    out = []
    for t, idx in cones:
        out.append((int(t), tuple(int(i) for i in idx)))
    return tuple(out)


def _row_violation(lhs, relations, rhs) -> float:
    worst = 0.0
    for rel, l, r in zip(relations, lhs, rhs):
        d = l - r
        worst = max(worst, d if rel == LE else -d if rel == GE else abs(d))
    return worst


@dataclass(frozen=True)
class ConstraintBlock:
    """Rows over the caller's x plus block-local variables z.

    Row k reads  A_x[k] @ x + A_local[k] @ z (rel_k) rhs[k];  cones refer to z.
    """

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    A_x: np.ndarray
    A_local: np.ndarray
    relations: tuple
    rhs: np.ndarray
    cones: tuple = ()
    row_names: tuple = ()

    @property
    def num_local(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def violation(self, x, z) -> float:
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        worst = max(0.0, float(np.max(self.lower - z, initial=0.0)), float(np.max(z - self.upper, initial=0.0)))
        worst = max(worst, _row_violation(self.A_x @ x + self.A_local @ z, self.relations, self.rhs))
        for t, idx in self.cones:
            worst = max(worst, float(np.linalg.norm(z[list(idx)]) - z[t]))
        return worst


@dataclass(frozen=True)
class ConicProgram:
    """min (or max) c^T x  s.t.  A x (rel) b,  lower <= x <= upper,  cones."""

    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cones: tuple = ()
    names: tuple = ()
    sense: str = "min"

    def __init__(self, c, A, relations: Sequence[str], b, lower=None, upper=None, cones=(), names=(), sense="min"):
        lp = LinearProgram(c, A, relations, b, lower=lower, upper=upper, sense=sense)
        n = lp.num_vars
        cones = _cone_tuple(cones)
        for t, idx in cones:
            if not all(0 <= i < n for i in (t, *idx)):
                raise ModelError("cone index out of range")
        names = tuple(names) if names else tuple(f"x{i}" for i in range(n))
        if len(names) != n:
            raise ModelError("one name per variable is required")
        for key in ("c", "A", "relations", "b", "lower", "upper", "sense"):
            object.__setattr__(self, key, getattr(lp, key))
        object.__setattr__(self, "cones", cones)
        object.__setattr__(self, "names", names)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = self.linear_part().violation(x)
        for t, idx in self.cones:
            worst = max(worst, float(np.linalg.norm(x[list(idx)]) - x[t]))
        return worst

    def linear_part(self) -> LinearProgram:
        return LinearProgram(self.c, self.A, self.relations, self.b, self.lower, self.upper, self.sense)


Backend = Callable[[ConicProgram, float], SolveOutcome]
_BACKENDS: dict = {}


def register_backend(name: str, backend: Backend) -> None:
    _BACKENDS[name] = backend


def unregister_backend(name: str) -> None:
    _BACKENDS.pop(name, None)


def registered_backends() -> tuple:
    return tuple(_BACKENDS)


def _resolve(name: Optional[str]) -> Optional[Backend]:
    if name is None:
        name = os.environ.get(ENV_BACKEND) or None
    if name is None:
        return None
    if name in _BACKENDS:
        return _BACKENDS[name]
    if name == "cvxpy":
        return cvxpy_backend if _has_cvxpy() else None
    if ":" in name:
        mod, _, attr = name.partition(":")
        try:
            fn = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ModelError(f"cannot load conic backend {name!r}: {exc}") from exc
        register_backend(name, fn)
        return fn
    return None


def solve_conic(program: ConicProgram, tol: float = 1e-7, backend: Optional[str] = None) -> SolveOutcome:
    """Dispatch to a registered backend; reports NO_BACKEND when none is available."""
    fn = _resolve(backend)
    if fn is None:
        return SolveOutcome(Status.NO_BACKEND, message="no conic backend registered")
    return fn(program, tol)


def _has_cvxpy() -> bool:
    try:
        importlib.import_module("cvxpy")
    except ImportError:
        return False
    return True


def cvxpy_backend(program: ConicProgram, tol: float = 1e-7) -> SolveOutcome:
    """Adapter for cvxpy (optional dependency)."""
    import cvxpy as cp

    n = program.num_vars
    v = cp.Variable(n)
    cons = []
    if len(program.b):
        A, b = program.A, program.b
        rel = np.array(program.relations)
        for mask, op in ((rel == LE, "le"), (rel == GE, "ge"), (rel == EQ, "eq")):
            if mask.any():
                lhs = A[mask] @ v
                cons.append(lhs <= b[mask] if op == "le" else lhs >= b[mask] if op == "ge" else lhs == b[mask])
    lo, hi = program.lower, program.upper
    if np.isfinite(lo).any():
        k = np.flatnonzero(np.isfinite(lo))
        cons.append(v[k] >= lo[k])
    if np.isfinite(hi).any():
        k = np.flatnonzero(np.isfinite(hi))
        cons.append(v[k] <= hi[k])
    for t, idx in program.cones:
        cons.append(cp.SOC(v[t], v[list(idx)]))
    obj = cp.Minimize(program.c @ v) if program.sense == "min" else cp.Maximize(program.c @ v)
    prob = cp.Problem(obj, cons)
    try:
        prob.solve()
    except cp.error.SolverError as exc:
        return SolveOutcome(Status.UNCERTIFIED, message=f"cvxpy failed: {exc}")
    status = {
        cp.OPTIMAL: Status.OPTIMAL,
        cp.OPTIMAL_INACCURATE: Status.UNCERTIFIED,
        cp.INFEASIBLE: Status.INFEASIBLE,
        cp.INFEASIBLE_INACCURATE: Status.INFEASIBLE,
        cp.UNBOUNDED: Status.UNBOUNDED,
        cp.UNBOUNDED_INACCURATE: Status.UNBOUNDED,
    }.get(prob.status, Status.UNCERTIFIED)
    if status is not Status.OPTIMAL:
        return SolveOutcome(status, message=f"cvxpy status {prob.status}")
    x = np.asarray(v.value, dtype=float)
    value = float(program.c @ x)
    return SolveOutcome(Status.OPTIMAL, value=value, x=x, lower_bound=value, upper_bound=value,
                        message=f"cvxpy {prob.solver_stats.solver_name}")


def lp_backend(program: ConicProgram, tol: float = 1e-7) -> SolveOutcome:
    """Cone-free programs only; wraps the reference simplex."""
    if program.cones:
        return SolveOutcome(Status.NO_BACKEND, message="simplex backend cannot handle cones")
    return solve_lp(program.linear_part(), tol=min(tol, 1e-9))


register_backend("simplex", lp_backend)

__all__ = [
    "ConicProgram", "ConstraintBlock", "register_backend", "unregister_backend", "registered_backends",
    "solve_conic", "cvxpy_backend", "lp_backend", "ENV_BACKEND",
]
