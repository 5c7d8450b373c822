"""Worst-case expectations over the discretized ambiguity set of a joint model.

For levels lam_i = i/l the ambiguity set asks P(C(lam_i)) >= 1 - g(lam_i).
Because the regions are nested, the worst case puts mass
w_i = g(lam_{i+1}) - g(lam_i) on the maximizer of a^T x over C(lam_i), so
    sup E[a^T x] = sum_{i<l} w_i max_{a in C(lam_i)} a^T x.
Each inner maximum is solved with a primal engine and certified by a dual
point u of the box/ellipsoid problem (see solvers.linmax).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CertificationError, ModelError, SolverError
from .possibility import Distortion, JointPossibilityModel, LevelRegion, level_set
from .solvers.conic import ConstraintBlock
from .solvers.linmax import LinearMaxBatch, dual_bound, maximize_linear, maximize_linear_batch, minimize_dual
from .solvers.lp import GE, LE, EQ, LinearProgram, solve_lp
from .solvers.projection import EllipsoidGeometry

DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class LevelGrid:
    ell: int
    distortion: Distortion = Distortion()

    def __post_init__(self):
        if isinstance(self.ell, bool) or int(self.ell) != self.ell or self.ell < 1:
            raise ModelError(f"ell must be a positive integer, got {self.ell!r}")
        object.__setattr__(self, "ell", int(self.ell))

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.ell + 1) / self.ell

    @property
    def distorted(self) -> np.ndarray:
        """g(lam_i) for i = 0..l."""
        return np.asarray(self.distortion(self.levels), dtype=float)

    @property
    def weights(self) -> np.ndarray:
        """w_i = g(lam_{i+1}) - g(lam_i), i = 0..l-1."""
        return np.diff(self.distorted)


@dataclass
class LevelCertificate:
    level: float
    primal: float
    dual: float
    scenario: np.ndarray
    u: np.ndarray

    @property
    def gap(self) -> float:
        return self.dual - self.primal


@dataclass
class IntervalWorstCase:
    """value is attained by the returned distribution; upper is a certified bound."""

    value: float
    upper: float
    support: list
    certificates: list

    @property
    def gap(self) -> float:
        return self.upper - self.value

    @property
    def gradient(self) -> np.ndarray:
        """Expected scenario under the worst distribution, a subgradient in x."""
        return sum(m * s for s, m in self.support)


@dataclass
class DualWitness:
    value: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: float
    u: np.ndarray


def _centered(R: LevelRegion):
    c = np.asarray(R.center, dtype=float)
    return np.asarray(R.lower) - c, np.asarray(R.upper) - c, c


def inner_max_primal(R: LevelRegion, x, tol: float = DEFAULT_TOL, method: str = "barrier"):
    """(value, argmax scenario) of max a^T x over R, certified to tol.

    Raises CertificationError carrying both bounds if the gap cannot be closed.
    """
    if tol <= 0:
        raise ModelError("tol must be positive")
    res = maximize_linear(R, x, tol=tol, method=method)
    if not res.certified:
        raise CertificationError("inner maximization not certified", lower=res.value, upper=res.bound)
    return res.value, res.point


def witness_from_u(R: LevelRegion, x, u) -> DualWitness:
    """Recover (alpha, beta, gamma) from u; the objective equals h(u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    lo, hi, c = _centered(R)
    s = x - R.matrix.T @ u
    value = float(c @ x + dual_bound(x, lo[None], hi[None], R.radius, R.matrix, u[None])[0])
    return DualWitness(value, np.maximum(s, 0.0), np.maximum(-s, 0.0), float(np.linalg.norm(u)), u)


def inner_max_dual(R: LevelRegion, x, tol: float = DEFAULT_TOL, u0=None) -> DualWitness:
    """Minimize the reduced dual over u; every returned witness is a valid upper bound."""
    if tol <= 0:
        raise ModelError("tol must be positive")
    x = np.asarray(x, dtype=float)
    lo, hi, _ = _centered(R)
    _, u = minimize_dual(x, lo, hi, R.radius, R.matrix, tol=tol, u0=u0)
    return witness_from_u(R, x, u)


class WorstCaseEvaluator:
    """Repeated worst-expectation queries for one model and grid.

    Level data and the eigendecomposition are computed once.  When every
    uncertain component and the budget share the same shape exponent z, all
    level regions are scaled copies of C(0) about the nominal point, so only
    level 0 needs solving.
    """

    def __init__(self, J: JointPossibilityModel, G: LevelGrid, tol: float = DEFAULT_TOL, method: str = "barrier"):
        if tol <= 0:
            raise ModelError("tol must be positive")
        self.J, self.G, self.tol, self.method = J, G, tol, method
        lam = G.levels[:-1]
        self.lam = lam
        self.weights = G.weights
        lo, hi = J.cut_bounds(lam)
        nom = J.nominal
        self.lo, self.hi = lo - nom, hi - nom
        self.radii = np.array([J.budget.radius(float(l)) for l in lam])
        self.geometry = EllipsoidGeometry.from_matrix(J.deviation_matrix)
        self.scale = self._homothety()

    def _homothety(self) -> Optional[np.ndarray]:
        z = {c.z1 for c in self.J.components if not c.crisp} | {c.z2 for c in self.J.components if not c.crisp}
        zb = self.J.budget.z
        if z - {zb}:
            return None
        return 1.0 - self.lam ** zb

    def _solve(self, x) -> LinearMaxBatch:
        base = float(self.J.nominal @ x)
        if self.scale is None:
            return maximize_linear_batch(x, self.lo, self.hi, self.radii, self.geometry,
                                         tol=self.tol, method=self.method, offset=base)
        one = maximize_linear_batch(x, self.lo[:1], self.hi[:1], self.radii[:1], self.geometry,
                                    tol=self.tol, method=self.method, offset=base)
        s = self.scale
        # every term of the primal and of h(u) is linear in the region size
        return LinearMaxBatch(s * one.values[0], s[:, None] * one.points[0], s * one.bounds[0],
                              np.repeat(one.duals, len(s), 0), np.repeat(one.certified, len(s)), one.iterations)

    def __call__(self, x) -> IntervalWorstCase:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.J.dim,):
            raise ModelError(f"expected x of dimension {self.J.dim}, got shape {x.shape}")
        res = self._solve(x)
        nom = self.J.nominal
        base = float(nom @ x)
        scen = res.points + nom
        support = [(scen[i], float(self.weights[i])) for i in range(len(self.lam))]
        certs = [LevelCertificate(float(self.lam[i]), base + float(res.values[i]), base + float(res.bounds[i]),
                                  scen[i], res.duals[i]) for i in range(len(self.lam))]
        value = base + float(self.weights @ res.values)
        upper = base + float(self.weights @ res.bounds)
        if not res.certified.all():
            bad = int(np.flatnonzero(~res.certified)[0])
            raise CertificationError(f"inner maximization at level {self.lam[bad]:.6g} not certified",
                                     lower=value, upper=upper)
        return IntervalWorstCase(value, upper, support, certs)


def worst_expectation(J: JointPossibilityModel, G: LevelGrid, x, tol: float = DEFAULT_TOL,
                      method: str = "barrier") -> IntervalWorstCase:
    return WorstCaseEvaluator(J, G, tol, method)(x)


def worst_distribution(J: JointPossibilityModel, G: LevelGrid, x, tol: float = DEFAULT_TOL) -> list:
    return worst_expectation(J, G, x, tol).support


def level_maxima_lp(G: LevelGrid, maxima) -> float:
    """Solve min w + sum_i (g(lam_i) - 1) v_i  s.t.  w - sum_{j<=i} v_j >= M_i,  v >= 0.

    maxima holds M_0..M_l (the last one is the value at the nominal point).
    """
    M = np.asarray(maxima, dtype=float)
    L = G.ell + 1
    if M.shape != (L,):
        raise ModelError(f"need {L} level maxima, got shape {M.shape}")
    c = np.concatenate([[1.0], G.distorted - 1.0])
    A = np.zeros((L, L + 1))
    A[:, 0] = 1.0
    A[:, 1:] = -np.tril(np.ones((L, L)))
    lp = LinearProgram(c, A, (GE,) * L, M, lower=np.concatenate([[-np.inf], np.zeros(L)]))
    out = solve_lp(lp)
    if not out.optimal:
        raise SolverError(f"level LP ended with status {out.status.value}", out)
    return out.value


@dataclass(frozen=True)
class ConicBlock(ConstraintBlock):
    """Constraint block over (w, v_0..v_l, alpha, beta, gamma, u) for one uncertain row.

    Local layout: w | v (l+1) | alpha ((l+1) x n) | beta ((l+1) x n) | gamma (l+1) | u ((l+1) x n).
    """

    ell: int = 0
    dim: int = 0

    def slices(self) -> dict:
        L, n = self.ell + 1, self.dim
        sizes = (("w", 1), ("v", L), ("alpha", L * n), ("beta", L * n), ("gamma", L), ("u", L * n))
        out, k = {}, 0
        for name, size in sizes:
            out[name] = slice(k, k + size)
            k += size
        return out

    @property
    def num_cones(self) -> int:
        return len(self.cones)


def conic_block(J: JointPossibilityModel, G: LevelGrid, b: float) -> ConicBlock:
    """Rows certifying sup E[a^T x] <= b over the level ambiguity set."""
    n, L = J.dim, G.ell + 1
    lam = G.levels
    gl = G.distorted
    lo, hi = J.cut_bounds(lam)
    nom = J.nominal
    up, down = hi - nom, nom - lo
    radii = np.array([J.budget.radius(float(l)) for l in lam])
    B = J.deviation_matrix

    nv = 1 + L + 3 * L * n + L
    iw, iv, ia = 0, 1, 1 + L
    ib, ig, iu = ia + L * n, ia + 2 * L * n, ia + 2 * L * n + L
    names = (["w"] + [f"v[{i}]" for i in range(L)]
             + [f"alpha[{i},{j}]" for i in range(L) for j in range(n)]
             + [f"beta[{i},{j}]" for i in range(L) for j in range(n)]
             + [f"gamma[{i}]" for i in range(L)]
             + [f"u[{i},{j}]" for i in range(L) for j in range(n)])
    lower = np.zeros(nv)
    lower[iw] = -np.inf
    lower[iu:] = -np.inf
    upper = np.full(nv, np.inf)

    rows_x, rows_z, rels, rhs, rnames = [], [], [], [], []

    def add(ax, az, rel, r, name):
        rows_x.append(ax)
        rows_z.append(az)
        rels.append(rel)
        rhs.append(r)
        rnames.append(name)

    az = np.zeros(nv)
    az[iw] = 1.0
    az[iv:iv + L] = gl - 1.0
    add(np.zeros(n), az, LE, float(b), "budget")
    for i in range(L):
        az = np.zeros(nv)
        az[ig + i] = radii[i]
        az[ia + i * n: ia + (i + 1) * n] = up[i]
        az[ib + i * n: ib + (i + 1) * n] = down[i]
        az[iw] = -1.0
        az[iv: iv + i + 1] = 1.0
        add(nom.copy(), az, LE, 0.0, f"level[{i}]")
    for i in range(L):
        for j in range(n):
            az = np.zeros(nv)
            az[ia + i * n + j] = 1.0
            az[ib + i * n + j] = -1.0
            az[iu + i * n: iu + (i + 1) * n] = B[:, j]
            ax = np.zeros(n)
            ax[j] = -1.0
            add(ax, az, EQ, 0.0, f"balance[{i},{j}]")
    cones = tuple((ig + i, tuple(range(iu + i * n, iu + (i + 1) * n))) for i in range(L))
    return ConicBlock(tuple(names), lower, upper, np.array(rows_x), np.array(rows_z), tuple(rels),
                      np.array(rhs), cones, tuple(rnames), ell=G.ell, dim=n)


def block_completion(J: JointPossibilityModel, G: LevelGrid, block: ConicBlock, x,
                     tol: float = DEFAULT_TOL, worst: Optional[IntervalWorstCase] = None):
    """Decide whether the block has a feasible completion at fixed x.

    Returns (status, z, worst) with status "feasible" (z is an explicit
    completion), "infeasible" (the certified lower bound already exceeds the
    budget, so no completion can exist) or "undecided" (b lies inside the
    certified bracket).
    """
    x = np.asarray(x, dtype=float)
    b = float(block.rhs[0])
    if worst is None:
        worst = worst_expectation(J, G, x, tol)
    if worst.value > b:
        return "infeasible", None, worst
    L, n = G.ell + 1, J.dim
    # per-level upper bounds, the nominal level last
    U = np.array([c.dual for c in worst.certificates] + [float(J.nominal @ x)])
    us = [c.u for c in worst.certificates] + [np.zeros(J.deviation_matrix.shape[0])]
    U = np.maximum.accumulate(U[::-1])[::-1]
    sl = block.slices()
    z = np.zeros(block.num_local)
    z[sl["w"]] = U[0]
    v = np.zeros(L)
    v[1:] = U[:-1] - U[1:]
    z[sl["v"]] = v
    B = J.deviation_matrix
    alpha = np.zeros((L, n))
    beta = np.zeros((L, n))
    gamma = np.zeros(L)
    for i in range(L):
        s = x - B.T @ us[i]
        alpha[i], beta[i], gamma[i] = np.maximum(s, 0), np.maximum(-s, 0), np.linalg.norm(us[i])
    z[sl["alpha"]] = alpha.ravel()
    z[sl["beta"]] = beta.ravel()
    z[sl["gamma"]] = gamma
    z[sl["u"]] = np.concatenate(us)
    if block.violation(x, z) <= 1e-7 * max(1.0, abs(b)):
        return "feasible", z, worst
    return "undecided", z, worst
