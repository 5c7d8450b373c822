"""Euclidean projections onto boxes, ellipsoids and their intersection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SolverError


@dataclass(frozen=True)
class EllipsoidGeometry:
    """Eigendecomposition of Q = B^T B, computed once per deviation matrix."""

    B: np.ndarray
    Q: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    active: np.ndarray

    @classmethod
    def from_matrix(cls, B) -> "EllipsoidGeometry":
        B = np.asarray(B, dtype=float)
        Q = B.T @ B
        e, V = np.linalg.eigh(Q)
        e = np.clip(e, 0.0, None)
        active = e > 1e-12 * max(float(e.max(initial=0.0)), 1e-300)
        return cls(B, Q, np.where(active, e, 0.0), V, active)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @property
    def nonsingular(self) -> bool:
        return bool(self.active.all())


def project_box(point, lower, upper) -> np.ndarray:
    return np.clip(np.asarray(point, dtype=float), lower, upper)


def _ellipsoid_batch(p, geom: EllipsoidGeometry, r, tol=1e-12, max_iter=100):
    """Project rows of p (centered) onto {z : z^T Q z <= r^2}."""
    p = np.atleast_2d(p)
    r = np.broadcast_to(np.asarray(r, dtype=float), (p.shape[0],))
    q = p @ geom.eigvecs
    e = geom.eigvals
    norm2 = (e * q * q).sum(-1)
    out = p.copy()
    outside = norm2 > r * r
    if not outside.any():
        return out
    qa, ra = q[outside], r[outside]
    zero = ra <= 0
    mu = np.zeros(len(ra))
    lo = np.zeros(len(ra))
    # e/(1+mu e)^2 <= 1/(4 mu) bounds the secular function from above
    hi = np.where(zero, 0.0, (qa * qa).sum(-1) / (4.0 * np.where(zero, 1.0, ra) ** 2))
    live = ~zero
    for _ in range(max_iter):
        if not live.any():
            break
        d = 1.0 + mu[:, None] * e
        psi = (e * qa * qa / d**2).sum(-1)
        dpsi = (-2.0 * e * e * qa * qa / d**3).sum(-1)
        f = psi - ra * ra
        lo = np.where(live & (f > 0), mu, lo)
        hi = np.where(live & (f < 0), mu, hi)
        # Newton on 1/sqrt(psi) - 1/r, nearly linear in mu
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sqrt(psi)
            step = mu - (1.0 / s - 1.0 / ra) / (-0.5 * dpsi / s**3)
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        new = np.where(live, new, mu)
        conv = np.abs(new - mu) <= tol * np.maximum(1.0, mu)
        mu = new
        live &= ~conv
    else:
        if live.any():
            raise SolverError("secular equation Newton iteration did not converge")
    z = np.where(zero[:, None], np.where(geom.active, 0.0, qa), qa / (1.0 + mu[:, None] * e))
    out[outside] = z @ geom.eigvecs.T
    return out


def project_ellipsoid(y, center, B, radius, geometry: EllipsoidGeometry | None = None, tol: float = 1e-12) -> np.ndarray:
    """Nearest point to y in {z : ||B (z - center)|| <= radius}.

    Directions in the null space of B are unconstrained and pass through.
    """
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    geom = geometry or EllipsoidGeometry.from_matrix(B)
    y = np.asarray(y, dtype=float)
    center = np.asarray(center, dtype=float)
    return _ellipsoid_batch(y - center, geom, radius, tol=tol)[0] + center


@dataclass
class ProjectionResult:
    point: np.ndarray
    iterations: int
    converged: bool


def _dykstra_batch(p, lo, hi, geom, r, tol=1e-12, max_iter=10_000):
    """Dykstra's alternating projections onto box and ellipsoid (centered coordinates)."""
    x = p.copy()
    P = np.zeros_like(p)
    Qc = np.zeros_like(p)
    r = np.broadcast_to(np.asarray(r, dtype=float), (p.shape[0],))
    lo = np.broadcast_to(np.asarray(lo, dtype=float), p.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), p.shape)
    live = np.ones(p.shape[0], dtype=bool)
    # converged rows are frozen so their rounding noise cannot hold up the batch
    for k in range(1, max_iter + 1):
        xl = x[live]
        y = np.clip(xl + P[live], lo[live], hi[live])
        P[live] = xl + P[live] - y
        xn = _ellipsoid_batch(y + Qc[live], geom, r[live])
        Qc[live] = y + Qc[live] - xn
        # iterates alone can stall while the corrections still move
        moved = np.maximum(np.abs(xn - xl).max(-1), np.abs(y - xn).max(-1))
        x[live] = xn
        idx = np.flatnonzero(live)
        live[idx[moved <= tol]] = False
        if not live.any():
            return x, k, True
    return x, max_iter, False


def dykstra_project(point, lower, upper, center, B, radius, tol: float = 1e-12,
                    max_iter: int = 10_000, geometry: EllipsoidGeometry | None = None) -> ProjectionResult:
    """Projection onto box [lower, upper] intersected with the ellipsoid around center."""
    geom = geometry or EllipsoidGeometry.from_matrix(B)
    c = np.asarray(center, dtype=float)
    p = np.asarray(point, dtype=float)[None] - c
    z, k, ok = _dykstra_batch(p, np.asarray(lower) - c, np.asarray(upper) - c, geom, radius, tol, max_iter)
    return ProjectionResult(z[0] + c, k, ok)
