"""Worst-case expectation over a finite scenario set with possibility degrees.

Scenarios are grouped by degree; the ambiguity set is then described by one
prefix-mass inequality per group boundary instead of one per subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SolverError
from .possibility import DiscretePossibility
from .solvers.lp import GE, LE, EQ, LinearProgram, solve_lp

TIE_TOL = 1e-12
MAX_ENUMERATION = 12


@dataclass(frozen=True)
class LevelGroups:
    """Index groups I_1..I_l (0-based) with strictly decreasing degrees, first degree 1."""

    groups: tuple
    degrees: tuple

    @property
    def size(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def count(self) -> int:
        return len(self.groups)

    def group_index(self) -> np.ndarray:
        """Position of each scenario's group (0-based)."""
        out = np.empty(self.size, dtype=int)
        for j, g in enumerate(self.groups):
            out[list(g)] = j
        return out

    def next_degrees(self) -> np.ndarray:
        """pi^{j+1} for j = 1..l, with pi^{l+1} = 0."""
        return np.append(np.asarray(self.degrees[1:], dtype=float), 0.0)


@dataclass(frozen=True)
class LinearSystem:
    """Rows A p (rel) b with p >= 0."""

    A: np.ndarray
    relations: tuple
    b: np.ndarray

    def program(self, objective, sense="max") -> LinearProgram:
        return LinearProgram(objective, self.A, self.relations, self.b, sense=sense)

    def satisfied(self, p, tol=1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        if np.any(p < -tol):
            return False
        return self.program(np.zeros(len(p))).violation(p) <= tol


@dataclass(frozen=True)
class DiscreteWorstCase:
    value: float
    distribution: np.ndarray


def partition_levels(P: DiscretePossibility) -> LevelGroups:
    d = np.asarray(P.degrees, dtype=float)
    if abs(d.max() - 1.0) > TIE_TOL:
        raise ModelError("possibility distribution is not normal (no degree equals 1)")
    order = sorted(range(len(d)), key=lambda i: (-d[i], i))
    groups, degrees = [], []
    for i in order:
        if degrees and degrees[-1] - d[i] <= TIE_TOL:
            groups[-1].append(i)
        else:
            groups.append([i])
            degrees.append(float(d[i]))
    degrees[0] = 1.0
    return LevelGroups(tuple(tuple(sorted(g)) for g in groups), tuple(degrees))


def ambiguity_constraints(G: LevelGroups) -> LinearSystem:
    K = G.size
    rows, rhs = [], []
    prefix = np.zeros(K)
    for j in range(G.count - 1):
        prefix[list(G.groups[j])] = 1.0
        rows.append(prefix.copy())
        rhs.append(1.0 - G.degrees[j + 1])
    rows.append(np.ones(K))
    rhs.append(1.0)
    rels = (GE,) * (G.count - 1) + (EQ,)
    return LinearSystem(np.array(rows), rels, np.array(rhs))


def enumerate_e2_constraints(G: LevelGroups, K: int) -> LinearSystem:
    """One inequality per nonempty proper subset; exponential, so K <= 12 only."""
    if K > MAX_ENUMERATION:
        raise ModelError(f"subset enumeration is limited to K <= {MAX_ENUMERATION}, got {K}")
    if K != G.size:
        raise ModelError("K does not match the number of grouped scenarios")
    deg = np.empty(K)
    for g, dj in zip(G.groups, G.degrees):
        deg[list(g)] = dj
    rows, rhs = [], []
    for mask in range(1, 2**K - 1):
        inside = np.array([(mask >> i) & 1 for i in range(K)], dtype=bool)
        rows.append(inside.astype(float))
        rhs.append(1.0 - deg[~inside].max())
    rows.append(np.ones(K))
    rhs.append(1.0)
    rels = (GE,) * (len(rows) - 1) + (EQ,)
    return LinearSystem(np.array(rows), rels, np.array(rhs))


def _payoffs(G: LevelGroups, payoffs) -> np.ndarray:
    v = np.asarray(payoffs, dtype=float).ravel()
    if len(v) != G.size:
        raise ModelError(f"expected {G.size} payoffs, got {len(v)}")
    if not np.all(np.isfinite(v)):
        raise ModelError("payoffs must be finite")
    return v


def worst_expectation_lp(G: LevelGroups, payoffs) -> DiscreteWorstCase:
    v = _payoffs(G, payoffs)
    out = solve_lp(ambiguity_constraints(G).program(v, sense="max"))
    if not out.optimal:
        raise SolverError(f"worst-case expectation LP ended with status {out.status.value}", out)
    return DiscreteWorstCase(out.value, out.x)


def worst_expectation_greedy(G: LevelGroups, payoffs) -> DiscreteWorstCase:
    v = _payoffs(G, payoffs)
    p = np.zeros(G.size)
    nxt = G.next_degrees()
    best_idx, value = None, 0.0
    for j, group in enumerate(G.groups):
        for i in group:
            if best_idx is None or v[i] > v[best_idx] or (v[i] == v[best_idx] and i < best_idx):
                best_idx = i
        mass = G.degrees[j] - nxt[j]
        p[best_idx] += mass
        value += mass * v[best_idx]
    return DiscreteWorstCase(float(value), p)


@dataclass(frozen=True)
class DiscreteDualBlock:
    """Linear rows over (x, alpha_1..alpha_{l-1}, beta), all of the form row <= rhs.

    Row 0 is the budget row; row 1 + i belongs to scenario i.
    alpha >= 0, beta free.
    """

    A_x: np.ndarray
    A_alpha: np.ndarray
    A_beta: np.ndarray
    rhs: np.ndarray

    @property
    def num_alpha(self) -> int:
        return self.A_alpha.shape[1]

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    def feasible(self, x, alpha, beta, tol=1e-9) -> bool:
        if np.any(np.asarray(alpha) < -tol):
            return False
        lhs = self.A_x @ x + self.A_alpha @ alpha + self.A_beta * beta
        return bool(np.all(lhs <= self.rhs + tol))


def dual_constraint_block(G: LevelGroups, scenarios, b: float) -> DiscreteDualBlock:
    S = np.asarray(scenarios, dtype=float)
    if S.ndim != 2 or S.shape[0] != G.size:
        raise ModelError(f"need {G.size} scenario rows, got shape {S.shape}")
    K, n = S.shape
    L = G.count - 1
    grp = G.group_index()
    A_x = np.vstack([np.zeros(n), S])
    A_alpha = np.zeros((K + 1, L))
    A_alpha[0] = np.asarray(G.degrees[1:], dtype=float) - 1.0
    for i in range(K):
        # alpha_j enters scenario i's row for every prefix I_1..I_j that contains i
        A_alpha[1 + i, grp[i]:] = 1.0
    A_beta = np.concatenate([[1.0], -np.ones(K)])
    rhs = np.concatenate([[float(b)], np.zeros(K)])
    return DiscreteDualBlock(A_x, A_alpha, A_beta, rhs)


def worst_expectation_dual(G: LevelGroups, payoffs) -> float:
    """Optimal value of the dual LP min beta + sum alpha_j (pi^{j+1} - 1)."""
    v = _payoffs(G, payoffs)
    blk = dual_constraint_block(G, v[:, None], 0.0)
    L = blk.num_alpha
    c = np.concatenate([blk.A_alpha[0], [1.0]])
    A = np.hstack([blk.A_alpha[1:], blk.A_beta[1:, None]])
    lower = np.concatenate([np.zeros(L), [-np.inf]])
    lp = LinearProgram(c, A, (LE,) * len(v), -v, lower=lower)
    out = solve_lp(lp)
    if not out.optimal:
        raise SolverError(f"dual LP ended with status {out.status.value}", out)
    return out.value


def block_completion_exists(block: DiscreteDualBlock, x, feas_tol: float = 1e-11) -> bool:
    """Whether some (alpha >= 0, beta) satisfies every row of the block at fixed x."""
    x = np.asarray(x, dtype=float)
    L = block.num_alpha
    A = np.hstack([block.A_alpha, block.A_beta[:, None]])
    lp = LinearProgram(np.zeros(L + 1), A, (LE,) * block.num_rows, block.rhs - block.A_x @ x,
                       lower=np.concatenate([np.zeros(L), [-np.inf]]))
    out = solve_lp(lp, feas_tol=feas_tol)
    if out.status.value not in ("optimal", "infeasible"):
        raise SolverError(f"completion LP ended with status {out.status.value}", out)
    return out.optimal


def scenario_payoffs(P: DiscretePossibility, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (P.dim,):
        raise ModelError(f"expected x of dimension {P.dim}, got shape {x.shape}")
    return P.scenarios @ x


def dual_value_bisection(G: LevelGroups, payoffs, rel_tol: float = 1e-9, max_iter: int = 200) -> float:
    """Smallest budget b for which the dual block admits a completion.

    The worst expectation lies between the smallest and largest payoff, and
    completion existence is monotone in b, so plain bisection applies.
    """
    v = _payoffs(G, payoffs)
    S = v[:, None]
    one = np.ones(1)
    lo, hi = float(v.min()), float(v.max())
    if block_completion_exists(dual_constraint_block(G, S, lo), one):
        return lo
    for _ in range(max_iter):
        if hi - lo <= rel_tol * (1.0 + abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if block_completion_exists(dual_constraint_block(G, S, mid), one):
            hi = mid
        else:
            lo = mid
    return hi
