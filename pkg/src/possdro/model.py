"""Uncertain linear programs, their lifting, deterministic counterparts and evaluation.

A problem is  min c^T x  s.t. certain rows, bounds, and uncertain rows
    sup_P E_P[a~^T x_S] + d^T x <= b
where each uncertain row carries its own possibility model over the
coefficients of the columns S (per-row ambiguity sets, no coupling).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .discrete import dual_constraint_block, partition_levels, worst_expectation_greedy
from .errors import ModelError
from .interval import DEFAULT_TOL, LevelGrid, WorstCaseEvaluator, conic_block
from .possibility import DiscretePossibility, JointPossibilityModel
from .solvers.conic import ConicProgram, solve_conic
from .solvers.cutting_plane import OracleResult, cutting_plane_min
from .solvers.lp import EQ, GE, LE, LinearProgram, SolveOutcome, Status

UncertaintyModel = Union[DiscretePossibility, JointPossibilityModel]


@dataclass(frozen=True)
class LinearRow:
    coefficients: np.ndarray
    relation: str
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class UncertainRow:
    """sup E[a~^T x[columns]] + certain^T x <= rhs.

    With uncertain_rhs the model has one extra trailing coordinate for b~ and
    the row reads  sup E[a~^T x[columns] - b~] + certain^T x <= 0.
    """

    model: UncertaintyModel
    columns: tuple
    rhs: float = 0.0
    certain: Optional[np.ndarray] = None
    grid: Optional[LevelGrid] = None
    uncertain_rhs: bool = False
    name: str = ""

    @property
    def kind(self) -> str:
        return "discrete" if isinstance(self.model, DiscretePossibility) else "interval"


@dataclass(frozen=True)
class UncertainObjective:
    """min sup E[c~^T x[columns]] + certain^T x."""

    model: UncertaintyModel
    columns: tuple
    certain: Optional[np.ndarray] = None
    grid: Optional[LevelGrid] = None


@dataclass(frozen=True)
class UncertainLP:
    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    objective: Union[np.ndarray, UncertainObjective]
    rows: tuple = ()
    uncertain: tuple = ()
    lifts: tuple = ()

    def __post_init__(self):
        n = len(self.names)
        if len(set(self.names)) != n:
            raise ModelError("variable names must be unique")
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != (n,) or upper.shape != (n,):
            raise ModelError("bounds must have one entry per variable")
        if np.any(lower > upper):
            raise ModelError("a lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if not isinstance(self.objective, UncertainObjective):
            c = np.asarray(self.objective, dtype=float)
            if c.shape != (n,):
                raise ModelError(f"objective must have {n} entries")
            object.__setattr__(self, "objective", c)
        else:
            _check_uncertain(self.objective, n, "objective")
        for r in self.rows:
            if np.asarray(r.coefficients).shape != (n,):
                raise ModelError(f"row {r.name or '?'} must have {n} coefficients")
        for r in self.uncertain:
            _check_uncertain(r, n, r.name or "uncertain row")

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def objective_uncertain(self) -> bool:
        return isinstance(self.objective, UncertainObjective)

    @property
    def lifted(self) -> bool:
        return not self.objective_uncertain and not any(r.uncertain_rhs for r in self.uncertain)

    def domain(self) -> LinearProgram:
        """Bounds and certain rows (the set X)."""
        n = self.num_vars
        A = np.array([r.coefficients for r in self.rows], dtype=float).reshape(-1, n)
        return LinearProgram(np.zeros(n), A, tuple(r.relation for r in self.rows),
                             np.array([r.rhs for r in self.rows], dtype=float), self.lower, self.upper)


def _check_uncertain(r, n, label):
    cols = tuple(r.columns)
    if not cols or any(not 0 <= c < n for c in cols) or len(set(cols)) != len(cols):
        raise ModelError(f"{label}: columns must be distinct variable indices")
    extra = 1 if getattr(r, "uncertain_rhs", False) else 0
    dim = r.model.dim
    if dim != len(cols) + extra:
        raise ModelError(f"{label}: model has dimension {dim}, expected {len(cols) + extra}")
    if isinstance(r.model, JointPossibilityModel) and r.grid is None:
        raise ModelError(f"{label}: interval models need a level grid")
    if r.certain is not None and np.asarray(r.certain).shape != (n,):
        raise ModelError(f"{label}: certain coefficients must have {n} entries")


def _add_variable(P: UncertainLP, name: str):
    if name in P.names:
        k = 1
        while f"{name}{k}" in P.names:
            k += 1
        name = f"{name}{k}"
    pad = lambda v: None if v is None else np.append(np.asarray(v, dtype=float), 0.0)
    rows = tuple(replace(r, coefficients=pad(r.coefficients)) for r in P.rows)
    unc = tuple(replace(r, certain=pad(r.certain)) for r in P.uncertain)
    obj = P.objective
    if isinstance(obj, UncertainObjective):
        obj = replace(obj, certain=pad(obj.certain))
    else:
        obj = pad(obj)
    return name, rows, unc, obj


def lift_uncertain_objective(P: UncertainLP) -> UncertainLP:
    """min sup E[c~^T x]  becomes  min t  s.t.  sup E[c~^T x] - t <= 0."""
    if not P.objective_uncertain:
        return P
    name, rows, unc, obj = _add_variable(P, "t")
    n = P.num_vars + 1
    certain = np.zeros(n) if obj.certain is None else obj.certain.copy()
    certain[-1] = -1.0
    row = UncertainRow(obj.model, obj.columns, 0.0, certain, obj.grid, False, "objective")
    c = np.zeros(n)
    c[-1] = 1.0
    return UncertainLP(P.names + (name,), np.append(P.lower, -np.inf), np.append(P.upper, np.inf), c,
                       rows, (row,) + unc, P.lifts + (f"objective lifted to {name}",))


def negate_last(model: UncertaintyModel) -> UncertaintyModel:
    """Model of (a, -b) from a model of (a, b)."""
    if isinstance(model, DiscretePossibility):
        S = np.array(model.scenarios)
        S[:, -1] *= -1.0
        return DiscretePossibility(S, model.degrees)
    comps = list(model.components)
    comps[-1] = comps[-1].negated()
    B = np.array(model.deviation_matrix)
    B[:, -1] *= -1.0
    return JointPossibilityModel(comps, B, model.budget)


def lift_uncertain_rhs(P: UncertainLP, i: int) -> UncertainLP:
    """a~^T x <= b~  becomes  (a~, -b~)^T (x, x_{n+1}) <= 0 with x_{n+1} = 1."""
    row = P.uncertain[i]
    if not row.uncertain_rhs:
        return P
    name, rows, unc, obj = _add_variable(P, f"one_{row.name or i}")
    n = P.num_vars + 1
    fix = np.zeros(n)
    fix[-1] = 1.0
    rows = rows + (LinearRow(fix, EQ, 1.0, f"fix_{name}"),)
    new = replace(unc[i], model=negate_last(row.model), columns=tuple(row.columns) + (n - 1,),
                  uncertain_rhs=False, rhs=0.0)
    unc = unc[:i] + (new,) + unc[i + 1:]
    return UncertainLP(P.names + (name,), np.append(P.lower, -np.inf), np.append(P.upper, np.inf), obj,
                       rows, unc, P.lifts + (f"right-hand side of row {row.name or i} lifted to {name}",))


def lift_all(P: UncertainLP) -> UncertainLP:
    P = lift_uncertain_objective(P)
    for i in range(len(P.uncertain)):
        P = lift_uncertain_rhs(P, i)
    return P


@dataclass(frozen=True)
class ConeBlockInfo:
    name: str
    kind: str
    rows: tuple
    variables: tuple


@dataclass(frozen=True)
class DeterministicProgram:
    """Variables with bounds, linear rows, second-order cones and a linear objective (min)."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray
    c: np.ndarray
    A: np.ndarray
    relations: tuple
    b: np.ndarray
    row_names: tuple
    cones: tuple = ()
    blocks: tuple = ()

    @property
    def num_vars(self) -> int:
        return len(self.names)

    @property
    def is_lp(self) -> bool:
        return not self.cones

    def to_conic(self) -> ConicProgram:
        return ConicProgram(self.c, self.A, self.relations, self.b, self.lower, self.upper,
                            self.cones, self.names)

    def violation(self, z) -> float:
        return self.to_conic().violation(z)


def _row_block(row: UncertainRow):
    """(A_x over the row's columns, block) for one lifted uncertain row."""
    if row.kind == "discrete":
        G = partition_levels(row.model)
        blk = dual_constraint_block(G, row.model.scenarios, row.rhs)
        L = blk.num_alpha
        names = tuple(f"alpha[{j + 1}]" for j in range(L)) + ("beta",)
        A_local = np.hstack([blk.A_alpha, blk.A_beta[:, None]])
        lower = np.concatenate([np.zeros(L), [-np.inf]])
        upper = np.full(L + 1, np.inf)
        rels = (LE,) * blk.num_rows
        row_names = ("budget",) + tuple(f"scenario[{k + 1}]" for k in range(blk.num_rows - 1))
        return blk.A_x, A_local, names, lower, upper, rels, blk.rhs, (), row_names
    blk = conic_block(row.model, row.grid, row.rhs)
    return (blk.A_x, blk.A_local, blk.names, blk.lower, blk.upper, blk.relations, blk.rhs,
            blk.cones, blk.row_names)


def deterministic_counterpart(P: UncertainLP) -> DeterministicProgram:
    if not P.lifted:
        raise ModelError("lift the uncertain objective and right-hand sides before building the counterpart")
    n = P.num_vars
    names = list(P.names)
    lower = list(P.lower)
    upper = list(P.upper)
    rows, rels, rhs, rnames = [], [], [], []
    for k, r in enumerate(P.rows):
        rows.append((np.asarray(r.coefficients, dtype=float), {}))
        rels.append(r.relation)
        rhs.append(float(r.rhs))
        rnames.append(r.name or f"row{k + 1}")
    cones, blocks = [], []
    for k, r in enumerate(P.uncertain):
        label = r.name or f"urow{k + 1}"
        A_cols, A_loc, lnames, llo, lhi, lrel, lrhs, lcones, lrn = _row_block(r)
        offset = len(names)
        names += [f"{label}.{s}" for s in lnames]
        lower += list(llo)
        upper += list(lhi)
        first = len(rows)
        cols = list(r.columns)
        for q in range(len(lrhs)):
            ax = np.zeros(n)
            ax[cols] = A_cols[q]
            if q == 0 and r.certain is not None:
                ax += r.certain
            rows.append((ax, {offset + j: v for j, v in enumerate(A_loc[q]) if v != 0.0}))
            rels.append(lrel[q])
            rhs.append(float(lrhs[q]))
            rnames.append(f"{label}.{lrn[q]}")
        for t, idx in lcones:
            cones.append((offset + t, tuple(offset + i for i in idx)))
        blocks.append(ConeBlockInfo(label, r.kind, (first, len(rows)), (offset, len(names))))
    N = len(names)
    A = np.zeros((len(rows), N))
    for q, (ax, loc) in enumerate(rows):
        A[q, :n] = ax
        for j, v in loc.items():
            A[q, j] = v
    c = np.zeros(N)
    c[:n] = P.objective
    return DeterministicProgram(tuple(names), np.array(lower, dtype=float), np.array(upper, dtype=float), c, A,
                                tuple(rels), np.array(rhs, dtype=float), tuple(rnames), tuple(cones), tuple(blocks))


# evaluation -------------------------------------------------------------

@dataclass
class RowEvaluation:
    name: str
    kind: str
    value: float
    upper: float
    rhs: float
    distribution: list

    @property
    def slack(self) -> float:
        return self.rhs - self.value

    def feasible(self, tol: float = 1e-6) -> bool:
        return self.upper <= self.rhs + tol * (1.0 + abs(self.rhs))


@dataclass
class Evaluation:
    x: np.ndarray
    objective: float
    objective_upper: float
    objective_distribution: list
    rows: list
    certain_slacks: list

    def feasible(self, tol: float = 1e-6) -> bool:
        ok = all(r.feasible(tol) for r in self.rows)
        return ok and all(s >= -tol * (1.0 + abs(b)) for s, b in self.certain_slacks)


class RowOracle:
    """Worst expectation of a lifted uncertain row (or objective) as a function of the full x."""

    def __init__(self, model: UncertaintyModel, columns, certain=None, grid=None, tol: float = DEFAULT_TOL,
                 method: str = "barrier"):
        self.model = model
        self.columns = list(columns)
        self.certain = None if certain is None else np.asarray(certain, dtype=float)
        if isinstance(model, DiscretePossibility):
            self.groups = partition_levels(model)
            self.evaluator = None
        else:
            self.groups = None
            self.evaluator = WorstCaseEvaluator(model, grid, tol, method)

    def evaluate(self, x):
        """(value, certified upper, subgradient over full x, distribution)."""
        x = np.asarray(x, dtype=float)
        xs = x[self.columns]
        grad = np.zeros(len(x))
        if self.groups is not None:
            S = self.model.scenarios
            res = worst_expectation_greedy(self.groups, S @ xs)
            value = upper = res.value
            gs = res.distribution @ S
            dist = [(S[k].copy(), float(p)) for k, p in enumerate(res.distribution) if p > 0]
        else:
            res = self.evaluator(xs)
            value, upper = res.value, res.upper
            gs = res.gradient
            dist = [(s.copy(), m) for s, m in res.support]
        grad[self.columns] = gs
        if self.certain is not None:
            shift = float(self.certain @ x)
            value, upper = value + shift, upper + shift
            grad += self.certain
        return value, upper, grad, dist

    def __call__(self, x) -> OracleResult:
        value, upper, grad, _ = self.evaluate(x)
        return OracleResult(value, grad, upper)


def _row_oracle(r: UncertainRow, tol, method="barrier") -> tuple:
    """Oracle and rhs for a row, lifting an uncertain rhs on the fly (x_{n+1} = 1)."""
    if not r.uncertain_rhs:
        return RowOracle(r.model, r.columns, r.certain, r.grid, tol, method), float(r.rhs)
    inner = RowOracle(negate_last(r.model), list(r.columns) + [-1], None, r.grid, tol, method)

    class _Extended:
        def evaluate(self, x):
            xe = np.append(np.asarray(x, dtype=float), 1.0)
            v, u, g, d = inner.evaluate(xe)
            g = g[:-1]
            if r.certain is not None:
                s = float(r.certain @ x)
                v, u, g = v + s, u + s, g + r.certain
            return v, u, g, d

        def __call__(self, x):
            v, u, g, _ = self.evaluate(x)
            return OracleResult(v, g, u)

    return _Extended(), 0.0


def evaluate_solution(P: UncertainLP, x, tol: float = 1e-6) -> Evaluation:
    x = np.asarray(x, dtype=float)
    if x.shape != (P.num_vars,):
        raise ModelError(f"expected {P.num_vars} values for x, got {x.size}")
    if P.objective_uncertain:
        o = P.objective
        v, u, _, d = RowOracle(o.model, o.columns, o.certain, o.grid, tol).evaluate(x)
    else:
        v = u = float(P.objective @ x)
        d = []
    rows = []
    for k, r in enumerate(P.uncertain):
        oracle, rhs = _row_oracle(r, tol)
        val, up, _, dist = oracle.evaluate(x)
        rows.append(RowEvaluation(r.name or f"urow{k + 1}", r.kind, val, up, rhs, dist))
    slacks = []
    for r in P.rows:
        lhs = float(np.asarray(r.coefficients) @ x)
        s = r.rhs - lhs if r.relation == LE else lhs - r.rhs if r.relation == GE else -abs(lhs - r.rhs)
        slacks.append((s, float(r.rhs)))
    return Evaluation(x, v, u, d, rows, slacks)


# solving ----------------------------------------------------------------

@dataclass
class Solution:
    status: Status
    x: Optional[np.ndarray]
    value: float
    lower: float
    upper: float
    iterations: int
    evaluation: Optional[Evaluation] = None
    message: str = ""
    engine: str = "reference"

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def solve_reference(P: UncertainLP, tol: float = 1e-5, max_iter: int = 500, inner_tol: float = 1e-8,
                    method: str = "barrier") -> Solution:
    """Kelley cutting planes with worst-expectation oracles for every uncertain row.

    An uncertain objective is used directly as the oracle objective instead of
    being lifted, which gives the same cuts and a usable upper bound.
    """
    if P.objective_uncertain:
        o = P.objective
        objective = RowOracle(o.model, o.columns, o.certain, o.grid, inner_tol, method)
    else:
        objective = P.objective
    cons = [_row_oracle(r, inner_tol, method) for r in P.uncertain]
    out: SolveOutcome = cutting_plane_min(objective, P.domain(), cons, tol=tol, max_iter=max_iter)
    ev = evaluate_solution(P, out.x, tol=inner_tol) if out.x is not None else None
    return Solution(out.status, out.x, out.value, out.lower_bound, out.upper_bound, out.iterations, ev,
                    out.message)


def solve_backend(P: UncertainLP, tol: float = 1e-7, backend: Optional[str] = None) -> Solution:
    """Solve the deterministic counterpart with a registered conic backend."""
    L = lift_all(P)
    prog = deterministic_counterpart(L)
    out = solve_conic(prog.to_conic(), tol=tol, backend=backend)
    if not out.optimal:
        return Solution(out.status, None, float("nan"), -np.inf, np.inf, out.iterations, None, out.message, "backend")
    x = out.x[:P.num_vars]
    ev = evaluate_solution(P, x)
    return Solution(out.status, x, ev.objective, out.value, ev.objective_upper, out.iterations, ev,
                    out.message, "backend")


__all__ = [
    "LinearRow", "UncertainRow", "UncertainObjective", "UncertainLP", "DeterministicProgram",
    "lift_uncertain_objective", "lift_uncertain_rhs", "lift_all", "deterministic_counterpart",
    "evaluate_solution", "solve_reference", "solve_backend", "RowOracle", "Evaluation", "Solution",
]
