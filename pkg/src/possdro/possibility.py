"""Possibility distributions used to describe uncertain constraint coefficients.

Fuzzy intervals with power-shaped profiles, the budgeted joint distribution
built from them, its level sets (box intersected with an ellipsoid) and the
risk distortion applied to necessity bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ModelError


def _check_level(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0 or np.isnan(lam):
        raise ModelError(f"level must lie in [0, 1], got {lam!r}")
    return lam


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ModelError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FuzzyInterval:
    """Fuzzy interval <nominal, lower_spread, upper_spread>_{z1-z2}.

    Both spreads zero gives a crisp coefficient whose cut is {nominal} at
    every level.
    """

    nominal: float
    lower_spread: float
    upper_spread: float
    z1: float = 1.0
    z2: float = 1.0

    def __post_init__(self):
        vals = (self.nominal, self.lower_spread, self.upper_spread, self.z1, self.z2)
        if not all(np.isfinite(v) for v in vals):
            raise ModelError("fuzzy interval parameters must be finite")
        if self.z1 <= 0 or self.z2 <= 0:
            raise ModelError(f"shape exponents must be positive, got z1={self.z1}, z2={self.z2}")
        crisp = self.lower_spread == 0 and self.upper_spread == 0
        if not crisp and (self.lower_spread <= 0 or self.upper_spread <= 0):
            raise ModelError(
                "spreads must both be positive (or both zero for a crisp coefficient), "
                f"got {self.lower_spread}, {self.upper_spread}"
            )

    @property
    def crisp(self) -> bool:
        return self.lower_spread == 0 and self.upper_spread == 0

    def cut(self, lam: float) -> tuple[float, float]:
        return fuzzy_cut(self, lam)

    def membership(self, a: float) -> float:
        return fuzzy_membership(self, a)

    def negated(self) -> "FuzzyInterval":
        """Distribution of -a: the spreads and exponents swap sides."""
        return FuzzyInterval(-self.nominal, self.upper_spread, self.lower_spread, self.z2, self.z1)


def fuzzy_cut(F: FuzzyInterval, lam: float) -> tuple[float, float]:
    lam = _check_level(lam)
    lo = F.nominal - F.lower_spread * (1.0 - lam ** F.z1)
    hi = F.nominal + F.upper_spread * (1.0 - lam ** F.z2)
    return lo, hi


def fuzzy_membership(F: FuzzyInterval, a: float) -> float:
    a = float(a)
    if a == F.nominal:
        return 1.0
    if a < F.nominal:
        if F.lower_spread == 0 or a <= F.nominal - F.lower_spread:
            return 0.0
        return (1.0 - (F.nominal - a) / F.lower_spread) ** (1.0 / F.z1)
    if F.upper_spread == 0 or a >= F.nominal + F.upper_spread:
        return 0.0
    return (1.0 - (a - F.nominal) / F.upper_spread) ** (1.0 / F.z2)


@dataclass(frozen=True)
class BudgetInterval:
    """Possibility of the deviation, the fuzzy interval <0, 0, gamma>_z."""

    gamma: float
    z: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ModelError(f"budget gamma must be finite and >= 0, got {self.gamma}")
        if not (np.isfinite(self.z) and self.z > 0):
            raise ModelError(f"budget shape exponent must be positive, got {self.z}")

    def radius(self, lam: float) -> float:
        return budget_radius(self, lam)

    def membership(self, d: float) -> float:
        if d < 0:
            return 0.0
        if d == 0:
            return 1.0
        if d >= self.gamma:
            return 0.0
        return (1.0 - d / self.gamma) ** (1.0 / self.z)


def budget_radius(D: BudgetInterval, lam: float) -> float:
    lam = _check_level(lam)
    return D.gamma * (1.0 - lam ** D.z)


@dataclass(frozen=True)
class LevelRegion:
    """C(level): box intersected with {a : ||B(a - center)|| <= radius}."""

    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    matrix: np.ndarray
    radius: float
    level: float

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, a, tol: float = 1e-9) -> bool:
        a = np.asarray(a, dtype=float)
        if np.any(a < self.lower - tol) or np.any(a > self.upper + tol):
            return False
        return bool(np.linalg.norm(self.matrix @ (a - self.center)) <= self.radius + tol)


@dataclass(frozen=True)
class JointPossibilityModel:
    """pi(a) = min(pi_1(a_1), ..., pi_n(a_n), pi_delta(||B(a - nominal)||))."""

    components: tuple[FuzzyInterval, ...]
    deviation_matrix: np.ndarray
    budget: BudgetInterval

    def __init__(self, components: Sequence[FuzzyInterval], deviation_matrix, budget: BudgetInterval):
        comps = tuple(components)
        if not comps:
            raise ModelError("joint model needs at least one component")
        B = _frozen(deviation_matrix, 2, "deviation matrix")
        if B.shape != (len(comps), len(comps)):
            raise ModelError(f"deviation matrix must be {len(comps)}x{len(comps)}, got {B.shape}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "deviation_matrix", B)
        object.__setattr__(self, "budget", budget)

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def nominal(self) -> np.ndarray:
        return np.array([c.nominal for c in self.components])

    @property
    def lower_spreads(self) -> np.ndarray:
        return np.array([c.lower_spread for c in self.components])

    @property
    def upper_spreads(self) -> np.ndarray:
        return np.array([c.upper_spread for c in self.components])

    def deviation(self, a) -> float:
        a = np.asarray(a, dtype=float)
        return float(np.linalg.norm(self.deviation_matrix @ (a - self.nominal)))

    def cut_bounds(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds at one level or at an array of levels, shape (..., n)."""
        lam = np.asarray(lam, dtype=float)
        if np.any((lam < 0) | (lam > 1)):
            raise ModelError("levels must lie in [0, 1]")
        lam = lam[..., None]
        nom = self.nominal
        z1 = np.array([c.z1 for c in self.components])
        z2 = np.array([c.z2 for c in self.components])
        lo = nom - self.lower_spreads * (1.0 - lam ** z1)
        hi = nom + self.upper_spreads * (1.0 - lam ** z2)
        return lo, hi

    def negated(self) -> "JointPossibilityModel":
        """Model of -a; the deviation norm is unchanged by the sign flip."""
        return JointPossibilityModel([c.negated() for c in self.components], self.deviation_matrix, self.budget)

    def with_budget(self, gamma: Optional[float] = None, z: Optional[float] = None) -> "JointPossibilityModel":
        b = BudgetInterval(self.budget.gamma if gamma is None else gamma, self.budget.z if z is None else z)
        return JointPossibilityModel(self.components, self.deviation_matrix, b)


def joint_membership(J: JointPossibilityModel, a) -> float:
    a = np.asarray(a, dtype=float)
    if a.shape != (J.dim,):
        raise ModelError(f"expected a point of dimension {J.dim}, got shape {a.shape}")
    degree = 1.0
    for comp, aj in zip(J.components, a):
        degree = min(degree, fuzzy_membership(comp, aj))
        if degree == 0.0:
            return 0.0
    return min(degree, J.budget.membership(J.deviation(a)))


def level_set(J: JointPossibilityModel, lam: float) -> LevelRegion:
    lam = _check_level(lam)
    lo, hi = J.cut_bounds(lam)
    lo.setflags(write=False)
    hi.setflags(write=False)
    center = J.nominal
    center.setflags(write=False)
    return LevelRegion(lo, hi, center, J.deviation_matrix, budget_radius(J.budget, lam), lam)


@dataclass(frozen=True)
class DiscretePossibility:
    """Possibility degrees attached to K explicitly listed scenarios."""

    scenarios: np.ndarray
    degrees: np.ndarray

    def __init__(self, scenarios, degrees):
        S = _frozen(scenarios, 2, "scenarios")
        d = _frozen(degrees, 1, "degrees")
        if len(d) < 1 or S.shape[0] != len(d):
            raise ModelError(f"need one degree per scenario, got {S.shape[0]} scenarios and {len(d)} degrees")
        if np.any(d < 0) or np.any(d > 1):
            raise ModelError("possibility degrees must lie in [0, 1]")
        if not np.isclose(d.max(), 1.0, rtol=0, atol=1e-12):
            raise ModelError(f"possibility distribution is not normal: max degree is {d.max()}, expected 1")
        object.__setattr__(self, "scenarios", S)
        object.__setattr__(self, "degrees", d)

    @property
    def size(self) -> int:
        return len(self.degrees)

    @property
    def dim(self) -> int:
        return self.scenarios.shape[1]


@dataclass(frozen=True)
class Distortion:
    """Concave distortion g(z) = (1 - rho**z) / (1 - rho); rho=None is the identity."""

    rho: Optional[float] = None

    def __post_init__(self):
        if self.rho is not None and not (0.0 < self.rho < 1.0):
            raise ModelError(f"distortion rho must lie in (0, 1), got {self.rho}")

    @property
    def identity(self) -> bool:
        return self.rho is None

    def __call__(self, z):
        return distort(self, z)


def distort(g: Distortion, z):
    z_arr = np.asarray(z, dtype=float)
    if np.any((z_arr < 0) | (z_arr > 1)) or np.any(np.isnan(z_arr)):
        raise ModelError("distortion argument must lie in [0, 1]")
    if g.rho is None:
        out = z_arr
    else:
        out = -np.expm1(z_arr * np.log(g.rho)) / (1.0 - g.rho)
        out = np.clip(out, 0.0, 1.0)
        # pin the endpoints against rounding
        out = np.where(z_arr == 0, 0.0, np.where(z_arr == 1, 1.0, out))
    return float(out) if np.ndim(out) == 0 else out


def _membership_array(F: FuzzyInterval, a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a, dtype=float)
    if F.crisp:
        return np.where(a == F.nominal, 1.0, 0.0)
    left = (a < F.nominal) & (a > F.nominal - F.lower_spread)
    right = (a > F.nominal) & (a < F.nominal + F.upper_spread)
    out[left] = (1.0 - (F.nominal - a[left]) / F.lower_spread) ** (1.0 / F.z1)
    out[right] = (1.0 - (a[right] - F.nominal) / F.upper_spread) ** (1.0 / F.z2)
    out[a == F.nominal] = 1.0
    return out


def joint_membership_grid(J: JointPossibilityModel, points: np.ndarray) -> np.ndarray:
    """Vectorized joint_membership over points of shape (m, n)."""
    points = np.asarray(points, dtype=float)
    deg = np.ones(points.shape[0])
    for j, comp in enumerate(J.components):
        deg = np.minimum(deg, _membership_array(comp, points[:, j]))
    d = np.linalg.norm((points - J.nominal) @ J.deviation_matrix.T, axis=1)
    G, z = J.budget.gamma, J.budget.z
    if G == 0:
        bud = np.where(d == 0, 1.0, 0.0)
    else:
        bud = np.where(d < G, np.clip(1.0 - d / G, 0.0, 1.0) ** (1.0 / z), 0.0)
    return np.minimum(deg, bud)


def necessity_of_level_set(J: JointPossibilityModel, lam: float, resolution: int = 400, pad: float = 0.05) -> float:
    """Grid estimate of N(C(lam)) = 1 - sup{pi(a) : a outside C(lam)} for 2-D models."""
    if J.dim != 2:
        raise ModelError("grid necessity estimate is only available for 2-D models")
    region = level_set(J, lam)
    lo0, hi0 = J.cut_bounds(0.0)
    span = hi0 - lo0
    g1 = np.linspace(lo0[0] - pad * span[0], hi0[0] + pad * span[0], resolution)
    g2 = np.linspace(lo0[1] - pad * span[1], hi0[1] + pad * span[1], resolution)
    pts = np.stack(np.meshgrid(g1, g2, indexing="ij"), -1).reshape(-1, 2)
    inside = np.all((pts >= region.lower) & (pts <= region.upper), axis=1)
    inside &= np.linalg.norm((pts - region.center) @ region.matrix.T, axis=1) <= region.radius
    outside = pts[~inside]
    if len(outside) == 0:
        return 1.0
    return 1.0 - float(joint_membership_grid(J, outside).max())
