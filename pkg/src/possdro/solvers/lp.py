"""Dense two-phase tableau simplex.

Pivots follow Dantzig's rule with a Harris ratio test and fall back to Bland's
rule during long degenerate runs, so the method never cycles.  Problems here are
small and dense, so the full tableau is kept, updated in place and rebuilt from
the original data at intervals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ModelError

LE, GE, EQ = "<=", ">=", "=="
_RELATIONS = {"<=": LE, ">=": GE, "==": EQ, "=": EQ}


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NO_BACKEND = "no-backend"
    UNCERTIFIED = "uncertified"


@dataclass
class SolveOutcome:
    status: Status
    value: float = float("nan")
    x: Optional[np.ndarray] = None
    lower_bound: float = float("-inf")
    upper_bound: float = float("inf")
    iterations: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class LinearProgram:
    """min (or max) c^T x  s.t.  A x (rel) b,  lower <= x <= upper."""

    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sense: str = "min"

    def __init__(self, c, A=None, relations: Sequence[str] = (), b=None, lower=None, upper=None, sense="min"):
        c = np.asarray(c, dtype=float).ravel()
        n = len(c)
        A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
        b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
        rels = tuple(_RELATIONS.get(r) for r in relations)
        if None in rels:
            raise ModelError(f"unknown relation in {relations!r}")
        if not (A.shape[0] == len(b) == len(rels)):
            raise ModelError("rows, relations and right-hand sides must have equal length")
        lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float).ravel()
        upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).ravel()
        if len(lower) != n or len(upper) != n:
            raise ModelError("bounds must match the number of variables")
        if sense not in ("min", "max"):
            raise ModelError(f"sense must be 'min' or 'max', got {sense!r}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ModelError("linear program data must be finite")
        for name, val in (("c", c), ("A", A), ("relations", rels), ("b", b),
                          ("lower", lower), ("upper", upper), ("sense", sense)):
            object.__setattr__(self, name, val)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.b)

    def violation(self, x) -> float:
        """Largest violation of rows and bounds at x."""
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        if self.num_rows:
            r = self.A @ x - self.b
            for rel, ri in zip(self.relations, r):
                v = ri if rel == LE else -ri if rel == GE else abs(ri)
                worst = max(worst, v)
        return worst


def _standard_form(lp: LinearProgram):
    """Substitute bounds so every column is >= 0; returns (A, b, c, rels, T, shift)."""
    n = lp.num_vars
    cols, shift = [], np.zeros(n)
    extra_rows, extra_b = [], []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        e = np.zeros(n)
        if np.isfinite(lo):
            shift[j] = lo
            e[j] = 1.0
            cols.append(e)
            if np.isfinite(hi):
                extra_rows.append(len(cols) - 1)
                extra_b.append(hi - lo)
        elif np.isfinite(hi):
            shift[j] = hi
            e[j] = -1.0
            cols.append(e)
        else:
            e[j] = 1.0
            cols.append(e)
            cols.append(-e)
    T = np.array(cols).T if cols else np.zeros((n, 0))
    A = lp.A @ T
    b = lp.b - lp.A @ shift
    rels = list(lp.relations)
    if extra_rows:
        ub = np.zeros((len(extra_rows), T.shape[1]))
        ub[np.arange(len(extra_rows)), extra_rows] = 1.0
        A = np.vstack([A, ub])
        b = np.concatenate([b, extra_b])
        rels += [LE] * len(extra_rows)
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * (T.T @ lp.c)
    return A, b, c, rels, T, shift


def _pivot(tab: np.ndarray, basis: list, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    colvec = tab[:, col].copy()
    colvec[row] = 0.0
    tab -= np.outer(colvec, tab[row])
    basis[row] = col


def _refactor(tab: np.ndarray, basis: list, orig: np.ndarray, cost: np.ndarray) -> bool:
    """Rebuild the tableau from the original rows for the current basis (drops accumulated error)."""
    m = len(basis)
    try:
        rows = np.linalg.solve(orig[:, basis], orig)
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(rows)):
        return False
    tab[:m] = rows
    tab[-1] = cost - cost[basis] @ rows
    return True


_PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 25
_DEGENERATE_RUN = 50
_HARRIS = 1e-9


def _run(tab, basis, ncols, tol, max_iter, orig, cost, it0=0):
    """Minimize the cost row (last row) over the first ncols columns.

    Dantzig's rule picks the entering column and a two-pass (Harris) ratio
    test prefers large pivot elements.  During long runs of degenerate pivots
    both choices switch to Bland's rule (smallest index), so the method cannot
    cycle.  The tableau is rebuilt from the original data periodically and
    before any terminal verdict.
    """
    it, since, degenerate = it0, 0, 0
    while True:
        red = tab[-1, :ncols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            if since and _refactor(tab, basis, orig, cost):
                since = 0
                continue
            return "optimal", it
        if it >= max_iter:
            return "limit", it
        bland = degenerate >= _DEGENERATE_RUN
        q = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
        col = tab[:-1, q]
        pos = np.flatnonzero(col > _PIVOT_TOL * max(1.0, float(np.abs(col).max(initial=0.0))))
        if pos.size == 0:
            if since and _refactor(tab, basis, orig, cost):
                since = 0
                continue
            return "unbounded", it
        rhs = np.maximum(tab[pos, -1], 0.0)
        ratios = rhs / col[pos]
        best = ratios.min()
        if bland:
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            p = int(min(ties, key=lambda i: basis[i]))
        else:
            # Harris: relax each row by a small feasibility tolerance, then take the largest pivot
            theta = ((rhs + _HARRIS) / col[pos]).min()
            elig = pos[ratios <= theta]
            p = int(elig[np.argmax(col[elig])])
        step = max(tab[p, -1], 0.0) / tab[p, q]
        degenerate = degenerate + 1 if step <= tol else 0
        _pivot(tab, basis, p, q)
        it += 1
        since += 1
        if since >= _REFACTOR_EVERY and _refactor(tab, basis, orig, cost):
            since = 0


def solve_lp(lp: LinearProgram, tol: float = 1e-9, max_iter: int = 50_000, feas_tol: float = 1e-7) -> SolveOutcome:
    """Two-phase simplex; returns status, optimal value and a primal point.

    The problem is declared infeasible when the phase-1 optimum exceeds
    feas_tol times the largest right-hand side magnitude (at least 1).  A final
    point that violates the rows by more than max(10 feas_tol, 1e-6) times
    that scale is reported as uncertified rather than optimal.
    """
    A, b, c, rels, T, shift = _standard_form(lp)
    m, n = A.shape
    sign = 1.0 if lp.sense == "min" else -1.0

    # slacks: +1 for <=, -1 for >=
    slack_rows = [i for i in range(m) if rels[i] != EQ]
    S = np.zeros((m, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        S[i, k] = 1.0 if rels[i] == LE else -1.0
    M = np.hstack([A, S])
    rhs = b.copy()
    neg = rhs < 0
    M[neg] *= -1.0
    rhs[neg] *= -1.0

    nreal = M.shape[1]
    basis = [-1] * m
    for k, i in enumerate(slack_rows):
        if M[i, n + k] == 1.0:
            basis[i] = n + k
    art_rows = [i for i in range(m) if basis[i] < 0]
    Art = np.zeros((m, len(art_rows)))
    for k, i in enumerate(art_rows):
        Art[i, k] = 1.0
        basis[i] = nreal + k

    tab = np.zeros((m + 1, nreal + len(art_rows) + 1))
    tab[:m, :nreal] = M
    tab[:m, nreal:-1] = Art
    tab[:m, -1] = rhs
    scale = max(1.0, float(np.abs(rhs).max(initial=0.0)))
    orig = tab[:m].copy()

    iters = 0
    if art_rows:
        tab[-1, :] = 0.0
        for i in art_rows:
            tab[-1, :nreal] -= tab[i, :nreal]
            tab[-1, -1] -= tab[i, -1]
        cost1 = np.zeros(tab.shape[1])
        cost1[nreal:-1] = 1.0
        state, iters = _run(tab, basis, nreal + len(art_rows), tol, max_iter, orig, cost1)
        if state == "limit":
            return SolveOutcome(Status.ITERATION_LIMIT, iterations=iters, message="phase 1 iteration limit")
        if -tab[-1, -1] > feas_tol * scale:
            return SolveOutcome(Status.INFEASIBLE, iterations=iters, message="phase 1 optimum is positive")
        # drive remaining artificials out of the basis, dropping redundant rows
        keep = []
        for i in range(m):
            if basis[i] >= nreal:
                row = tab[i, :nreal]
                j = int(np.argmax(np.abs(row)))
                if abs(row[j]) <= 1e-9:
                    continue
                _pivot(tab, basis, i, j)
            keep.append(i)
        tab = np.vstack([tab[keep], tab[-1:]])
        basis = [basis[i] for i in keep]
        tab = np.hstack([tab[:, :nreal], tab[:, -1:]])
        orig = np.hstack([orig[keep, :nreal], orig[keep, -1:]])

    # phase 2 cost row
    cfull = np.concatenate([c, np.zeros(nreal - n)])
    tab[-1, :] = 0.0
    tab[-1, :nreal] = cfull
    for i, bi in enumerate(basis):
        if cfull[bi] != 0.0:
            tab[-1] -= cfull[bi] * tab[i]
    state, iters = _run(tab, basis, nreal, tol, max_iter, orig, np.append(cfull, 0.0), iters)

    xs = np.zeros(nreal)
    for i, bi in enumerate(basis):
        xs[bi] = tab[i, -1]
    x = T @ xs[:n] + shift
    value = float(lp.c @ x)
    if state == "unbounded":
        return SolveOutcome(Status.UNBOUNDED, value=-sign * np.inf, x=x, iterations=iters, message="ray found")
    if state == "limit":
        return SolveOutcome(Status.ITERATION_LIMIT, value=value, x=x, iterations=iters, message="phase 2 iteration limit")
    worst = lp.violation(x)
    if worst > max(10 * feas_tol, 1e-6) * scale:
        return SolveOutcome(Status.UNCERTIFIED, value=value, x=x, iterations=iters,
                            message=f"final point violates the constraints by {worst:.3g}")
    return SolveOutcome(Status.OPTIMAL, value=value, x=x, lower_bound=value, upper_bound=value, iterations=iters)
