"""Kelley's cutting-plane method for convex programs given by oracles.

    min f(x)  s.t.  F_k(x) <= r_k,  x in X (a polyhedron)

Each oracle returns a value, a subgradient and optionally a certified upper
bound.  The master LP keeps the linear minorants collected so far; its optimum
is a lower bound, and the best feasible query point supplies the upper bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ModelError
from .lp import GE, LE, LinearProgram, SolveOutcome, Status, solve_lp


@dataclass
class OracleResult:
    value: float
    gradient: np.ndarray
    upper: Optional[float] = None

    @property
    def bound(self) -> float:
        return self.value if self.upper is None else self.upper


Oracle = Callable[[np.ndarray], OracleResult]


def linear_oracle(c) -> Oracle:
    c = np.asarray(c, dtype=float)
    return lambda x: OracleResult(float(c @ x), c)


def _as_result(out) -> OracleResult:
    if isinstance(out, OracleResult):
        return out
    value, grad, *rest = out
    return OracleResult(float(value), np.asarray(grad, dtype=float), float(rest[0]) if rest else None)


def cutting_plane_min(objective, domain: LinearProgram, constraints: Sequence = (), tol: float = 1e-6,
                      feas_tol: float = 1e-7, max_iter: int = 500, x0=None,
                      callback: Optional[Callable] = None) -> SolveOutcome:
    """Minimize a convex oracle over a polyhedral domain with convex oracle constraints.

    objective: an Oracle, or a vector c for a linear objective.
    constraints: pairs (oracle, rhs) meaning F(x) <= rhs.
    Stops when upper - lower <= tol * (1 + |upper|) at a point whose
    certified constraint bounds exceed rhs by at most feas_tol * (1 + |rhs| + |F(x)|).
    """
    f = linear_oracle(objective) if not callable(objective) else objective
    n = domain.num_vars
    cons = [(g, float(r)) for g, r in constraints]

    # master variables (x, theta); theta is free
    base_A = np.hstack([domain.A, np.zeros((domain.num_rows, 1))])
    base_rel = list(domain.relations)
    base_b = list(domain.b)
    lower = np.concatenate([domain.lower, [-np.inf]])
    upper = np.concatenate([domain.upper, [np.inf]])
    c_master = np.zeros(n + 1)
    c_master[-1] = 1.0
    cut_rows, cut_rel, cut_rhs = [], [], []

    if x0 is None:
        start = solve_lp(LinearProgram(domain.c, domain.A, domain.relations, domain.b,
                                       domain.lower, domain.upper, domain.sense))
        if start.status is Status.INFEASIBLE:
            return SolveOutcome(Status.INFEASIBLE, message="domain is empty")
        if not start.optimal:
            start = solve_lp(LinearProgram(np.zeros(n), domain.A, domain.relations, domain.b,
                                           domain.lower, domain.upper))
            if not start.optimal:
                return SolveOutcome(start.status, message="no starting point in the domain")
        x = start.x
    else:
        x = np.asarray(x0, dtype=float)

    best_x, best_val, best_up = None, np.inf, np.inf
    lower_bound = -np.inf
    history = []
    for it in range(1, max_iter + 1):
        fo = _as_result(f(x))
        g = np.asarray(fo.gradient, dtype=float)
        # f(x) + g^T (y - x) <= theta
        row = np.concatenate([g, [-1.0]])
        cut_rows.append(row)
        cut_rel.append(LE)
        cut_rhs.append(float(g @ x - fo.value))
        feasible = True
        for oracle, rhs in cons:
            co = _as_result(oracle(x))
            slack = feas_tol * (1.0 + abs(rhs) + abs(co.value))
            if co.bound > rhs + slack:
                feasible = False
            if co.value > rhs - slack or not feasible:
                cg = np.asarray(co.gradient, dtype=float)
                cut_rows.append(np.concatenate([cg, [0.0]]))
                cut_rel.append(LE)
                cut_rhs.append(float(rhs + cg @ x - co.value))
        if feasible and fo.bound < best_up:
            best_x, best_val, best_up = x.copy(), fo.value, fo.bound
        master = LinearProgram(c_master, np.vstack([base_A] + cut_rows), base_rel + cut_rel,
                               np.array(base_b + cut_rhs), lower, upper)
        out = solve_lp(master)
        if out.status is Status.INFEASIBLE:
            return SolveOutcome(Status.INFEASIBLE, iterations=it, message="constraint cuts left no feasible point")
        if out.status is Status.UNBOUNDED:
            return SolveOutcome(Status.UNBOUNDED, iterations=it, message="master problem is unbounded")
        if not out.optimal:
            return SolveOutcome(out.status, x=best_x, value=best_val, lower_bound=lower_bound,
                                upper_bound=best_up, iterations=it, message="master LP failed")
        lower_bound = max(lower_bound, out.value)
        if lower_bound > best_up + 10 * tol * (1.0 + abs(best_up)):
            return SolveOutcome(Status.UNCERTIFIED, x=best_x, value=best_val, lower_bound=lower_bound,
                                upper_bound=best_up, iterations=it,
                                message="lower bound exceeds upper bound (invalid cut or inexact oracle)")
        history.append((lower_bound, best_up))
        if callback is not None:
            callback(it, x, fo, lower_bound, best_up)
        if best_x is not None and best_up - lower_bound <= tol * (1.0 + abs(best_up)):
            return SolveOutcome(Status.OPTIMAL, value=best_val, x=best_x, lower_bound=lower_bound,
                                upper_bound=best_up, iterations=it, extra={"history": history})
        x = out.x[:n]
    status = Status.ITERATION_LIMIT
    return SolveOutcome(status, value=best_val, x=best_x, lower_bound=lower_bound, upper_bound=best_up,
                        iterations=max_iter, message="iteration cap reached", extra={"history": history})


def box_domain(lower, upper, A=None, relations=(), b=None) -> LinearProgram:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape:
        raise ModelError("bounds must have equal shape")
    return LinearProgram(np.zeros(len(lower)), A, relations, b, lower=lower, upper=upper)


__all__ = ["OracleResult", "cutting_plane_min", "linear_oracle", "box_domain", "GE", "LE"]
