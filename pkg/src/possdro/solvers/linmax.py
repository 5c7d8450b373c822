"""Maximize a linear function over a box intersected with an ellipsoid.

Everything works in centered coordinates y = a - center, so a region is
    lo <= y <= hi,  ||B y|| <= r      (lo <= 0 <= hi)
and the Lagrangian dual of  max x^T y  over it is
    h(u) = r ||u|| + sum_j hi_j [x_j - (B^T u)_j]_+ + (-lo_j) [(B^T u)_j - x_j]_+ ,
minimized over u.  Any u gives an upper bound, any feasible y a lower bound;
both are reported so the caller can see the certified gap.

Many regions sharing B are solved at once (one per possibility level).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError, SolverError
from .lp import LinearProgram, solve_lp
from .projection import EllipsoidGeometry, _dykstra_batch

FIXED_TOL = 1e-14


@dataclass
class LinearMaxBatch:
    """Per-region results; values and bounds exclude the constant center^T x."""

    values: np.ndarray
    points: np.ndarray
    bounds: np.ndarray
    duals: np.ndarray
    certified: np.ndarray
    iterations: int = 0

    @property
    def gaps(self) -> np.ndarray:
        return self.bounds - self.values


def dual_bound(x, lo, hi, r, B, u) -> np.ndarray:
    """h(u) for rows of lo, hi, u (broadcast over the leading axis)."""
    u = np.atleast_2d(u)
    s = x - u @ B
    return r * np.linalg.norm(u, axis=-1) + (np.maximum(s, 0) * hi).sum(-1) + (np.maximum(-s, 0) * (-lo)).sum(-1)


def line_dual(x, lo, hi, r, B, d, extra=None):
    """Exact minimum of h(mu d) over mu >= 0.

    h is convex and piecewise linear in mu, so its minimum sits at mu = 0 or at
    a kink mu = x_j / (B^T d)_j.  Returns (bound, u).
    """
    d = np.atleast_2d(d)
    Bd = d @ B
    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = np.where(Bd != 0, x / Bd, 0.0)
    kinks = np.where(np.isfinite(kinks) & (kinks > 0), kinks, 0.0)
    cols = [np.zeros((len(d), 1)), kinks]
    if extra is not None:
        cols.append(np.asarray(extra, dtype=float).reshape(len(d), -1))
    mu = np.concatenate(cols, 1)
    s = x - mu[:, :, None] * Bd[:, None, :]
    h = (mu * (r * np.linalg.norm(d, axis=-1))[:, None]
         + (np.maximum(s, 0) * hi[:, None, :]).sum(-1) + (np.maximum(-s, 0) * (-lo[:, None, :])).sum(-1))
    k = h.argmin(1)
    rows = np.arange(len(d))
    return h[rows, k], mu[rows, k][:, None] * d


def _repair(y, lo, hi, Q, r):
    """Clip into the box, then shrink toward the center into the ellipsoid."""
    y = np.clip(y, lo, hi)
    q = np.einsum("ki,ij,kj->k", y, Q, y)
    over = q > r * r
    if over.any():
        y[over] *= (r[over] / np.sqrt(q[over]))[:, None]
    return y


def _polish(x, lo, hi, B, r, y, rel=1e-5):
    """Closed-form maximizer on the face suggested by y.

    Coordinates within rel * width of a bound are fixed there; the others
    maximize x_F^T y_F over the slice {||B_F y_F + B_A y_A|| <= r}.  Returns
    None when the face guess yields no better feasible point.
    """
    w = hi - lo
    at_hi = (hi - y <= rel * w) & (x > 0)
    at_lo = (y - lo <= rel * w) & (x < 0)
    fixed = at_hi | at_lo
    free = ~fixed & (w > FIXED_TOL)
    if not free.any():
        return None
    ya = np.where(at_hi, hi, np.where(at_lo, lo, 0.0))
    ya[~fixed & ~free] = y[~fixed & ~free]
    M = B[:, free]
    c = B @ np.where(free, 0.0, ya)
    Mp = np.linalg.pinv(M)
    c_par = M @ (Mp @ c)
    room = r * r - float((c - c_par) @ (c - c_par))
    g = Mp.T @ x[free]
    gn = np.linalg.norm(g)
    if room < 0 or gn == 0:
        return None
    rho = np.sqrt(room)
    yf = Mp @ (rho * g / gn - c_par)
    # directions of x_F outside the row space of M are unbounded on the slice
    resid = x[free] - M.T @ g
    if np.linalg.norm(resid) > 1e-12 * (1 + np.linalg.norm(x)):
        return None
    out = ya.copy()
    out[free] = yf
    if np.any(out < lo - 1e-12 * (1 + w)) or np.any(out > hi + 1e-12 * (1 + w)):
        return None
    u = None
    if rho > 0:
        # stationarity x_F = mu M^T (B y) holds with mu = |g| / rho
        u = (gn / rho) * (c - c_par + rho * g / gn)
    return np.clip(out, lo, hi), u


def _barrier(x, lo, hi, Q, r, gap, factor=50.0, max_newton=100):
    """Batched log-barrier path following; returns a strictly feasible y and the scaled dual eta."""
    m, n = lo.shape
    mid = 0.5 * (lo + hi)
    qm = np.einsum("ki,ij,kj->k", mid, Q, mid)
    th = np.minimum(1.0, 0.5 * r / np.sqrt(np.maximum(qm, 1e-300)))
    y = th[:, None] * mid
    ncon = 2 * n + 1
    scale = np.maximum(np.abs(x) @ (hi - lo).T, 1e-300)
    t = ncon / scale
    t_final = ncon / (gap * scale)
    r2 = r * r
    idx = np.arange(n)
    steps = 0
    while True:
        for _ in range(max_newton):
            Qy = y @ Q
            s = r2 - (y * Qy).sum(-1)
            dh, dl = 1.0 / (hi - y), 1.0 / (y - lo)
            g = -t[:, None] * x + dh - dl + 2.0 * Qy / s[:, None]
            H = 2.0 * Q[None] / s[:, None, None] + 4.0 * Qy[:, :, None] * Qy[:, None, :] / (s**2)[:, None, None]
            H[:, idx, idx] += dh**2 + dl**2
            dy = -np.linalg.solve(H, g[..., None])[..., 0]
            lam2 = -(g * dy).sum(-1)
            todo = lam2 > 1e-9
            if not todo.any():
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                rh = np.where(dy > 0, (hi - y) / dy, np.inf).min(-1)
                rl = np.where(dy < 0, (lo - y) / dy, np.inf).min(-1)
                qa = np.einsum("ki,ij,kj->k", dy, Q, dy)
                qb = (dy * Qy).sum(-1)
                # largest a with (y + a dy)^T Q (y + a dy) <= r^2
                re = np.where(qa > 0, s / (qb + np.sqrt(qb * qb + qa * s)),
                              np.where(qb > 0, s / (2.0 * qb), np.inf))
            amax = np.minimum(np.minimum(rh, rl), re)
            # damped Newton step, safe for self-concordant barriers
            step = np.where(lam2 < 0.25, 1.0, 1.0 / (1.0 + np.sqrt(lam2)))
            step = np.where(todo, np.minimum(step, 0.99 * amax), 0.0)
            y = y + step[:, None] * dy
            steps += 1
        if np.all(t >= t_final):
            break
        t = np.minimum(t * factor, t_final)
    Qy = y @ Q
    s = r2 - (y * Qy).sum(-1)
    return y, 1.0 / (t * s), steps


def _ascent(x, lo, hi, geom_f, r, tol, max_iter=100_000, omega=1.5, check_every=10,
            certify=None):
    """Over-relaxed projected gradient ascent; each projection is a Dykstra loop."""
    m, n = lo.shape
    diam = np.maximum(np.linalg.norm(hi - lo, axis=-1), 1e-300)
    step = diam / max(np.linalg.norm(x), 1e-300)
    y = np.zeros((m, n))
    done = np.zeros(m, dtype=bool)
    for k in range(1, max_iter + 1):
        live = ~done
        target, _, _ = _dykstra_batch(y[live] + step[live, None] * x, lo[live], hi[live], geom_f, r[live])
        new = y[live] + omega * (target - y[live])
        # over-relaxation may leave the set; keep the projected point in that case
        bad = ~_inside(new, lo[live], hi[live], geom_f.Q, r[live])
        new[bad] = target[bad]
        moved = np.abs(new - y[live]).max(-1) <= 1e-13 * diam[live]
        y[live] = new
        if k % check_every == 0 or moved.all():
            ok = certify(y, done)
            done |= ok
            idx = np.flatnonzero(live)
            done[idx[moved]] = True
        if done.all():
            return y, k
    return y, max_iter


def _inside(y, lo, hi, Q, r, tol=1e-12):
    q = np.einsum("ki,ij,kj->k", y, Q, y)
    return np.all((y >= lo - tol) & (y <= hi + tol), -1) & (q <= r * r * (1 + 1e-12) + tol)


def _null_space_max(x, lo, hi, B):
    """r = 0 with singular B: maximize over the box inside the null space of B."""
    _, sv, Vt = np.linalg.svd(B)
    rank = int((sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)).sum())
    N = Vt[rank:].T
    if N.shape[1] == 0:
        return 0.0, np.zeros(len(x))
    k = N.shape[1]
    lp = LinearProgram(N.T @ x, np.vstack([N, N]), ("<=",) * len(x) + (">=",) * len(x),
                       np.concatenate([hi, lo]), lower=np.full(k, -np.inf), sense="max")
    out = solve_lp(lp)
    if not out.optimal:
        raise SolverError(f"null-space LP ended with status {out.status.value}", out)
    y = np.clip(N @ out.x, lo, hi)
    return float(x @ y), y


def maximize_linear_batch(x, lo, hi, radii, geometry: EllipsoidGeometry, tol: float = 1e-7,
                          method: str = "barrier", offset: float = 0.0) -> LinearMaxBatch:
    """Solve max x^T y over m regions {lo_k <= y <= hi_k, ||B y|| <= r_k}.

    Regions are certified when bound - value <= tol * (1 + |offset + value|),
    where offset is the constant term the caller adds back (center^T x).
    """
    if method not in ("barrier", "projection"):
        raise ModelError(f"unknown method {method!r}")
    x = np.asarray(x, dtype=float)
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    r = np.broadcast_to(np.asarray(radii, dtype=float), (lo.shape[0],)).copy()
    m, n = lo.shape
    if np.any(lo > FIXED_TOL) or np.any(hi < -FIXED_TOL) or np.any(r < 0):
        raise ModelError("regions must contain their center")
    B, Q = geometry.B, geometry.Q

    values = np.zeros(m)
    points = np.zeros((m, n))
    bounds = np.full(m, np.inf)
    duals = np.zeros((m, B.shape[0]))
    iters = 0

    def finish(rows, y, extra=None):
        y = _repair(y, lo[rows], hi[rows], Q, r[rows])
        v = y @ x
        face_u = np.zeros((len(rows), B.shape[0]))
        has_u = np.zeros(len(rows), dtype=bool)
        for i, k in enumerate(rows):
            out = _polish(x, lo[k], hi[k], B, r[k], y[i])
            if out is None:
                continue
            cand = _repair(out[0][None], lo[k][None], hi[k][None], Q, r[k:k + 1])[0]
            if cand @ x > v[i]:
                y[i], v[i] = cand, cand @ x
            if out[1] is not None:
                face_u[i], has_u[i] = out[1], True
        hb, u = line_dual(x, lo[rows], hi[rows], r[rows], B, y @ B.T, extra)
        # u = 0 gives the pure box bound, which may be tighter
        h0 = dual_bound(x, lo[rows], hi[rows], r[rows], B, np.zeros_like(u))
        u = np.where((h0 < hb)[:, None], 0.0, u)
        hb = np.minimum(hb, h0)
        if has_u.any():
            hf = np.where(has_u, dual_bound(x, lo[rows], hi[rows], r[rows], B, face_u), np.inf)
            u = np.where((hf < hb)[:, None], face_u, u)
            hb = np.minimum(hb, hf)
        better = np.isinf(bounds[rows]) | (v > values[rows])
        values[rows] = np.where(better, v, values[rows])
        points[rows] = np.where(better[:, None], y, points[rows])
        improve = hb < bounds[rows]
        bounds[rows] = np.where(improve, hb, bounds[rows])
        duals[rows] = np.where(improve[:, None], u, duals[rows])

    def certified(rows):
        return bounds[rows] - values[rows] <= tol * (1.0 + np.abs(offset + values[rows]))

    width = hi - lo
    vertex = np.where(x > 0, hi, np.where(x < 0, lo, 0.0))
    vq = np.einsum("ki,ij,kj->k", vertex, Q, vertex)
    exact = vq <= r * r
    values[exact] = vertex[exact] @ x
    points[exact] = vertex[exact]
    bounds[exact] = values[exact]

    zero_r = ~exact & (r <= 0)
    for k in np.flatnonzero(zero_r):
        if geometry.nonsingular:
            values[k], points[k] = 0.0, 0.0
            duals[k] = np.linalg.lstsq(B.T, x, rcond=None)[0]
            bounds[k] = max(0.0, float(dual_bound(x, lo[k], hi[k], r[k], B, duals[k])[0]))
        else:
            values[k], points[k] = _null_space_max(x, lo[k], hi[k], B)
            bounds[k] = values[k]

    rest = np.flatnonzero(~exact & ~zero_r)
    patterns = {}
    for k in rest:
        patterns.setdefault(tuple(width[k] > FIXED_TOL), []).append(k)
    for pattern, rows in patterns.items():
        rows = np.asarray(rows)
        free = np.asarray(pattern)
        xf = x[free]
        if not free.any() or not np.any(xf):
            values[rows], points[rows], bounds[rows] = 0.0, 0.0, 0.0
            continue
        Qf = Q[np.ix_(free, free)]
        if method == "barrier":
            gap = 1e-9
            for _ in range(3):
                yf, eta, steps = _barrier(xf, lo[rows][:, free], hi[rows][:, free], Qf, r[rows], gap)
                iters += steps
                y = np.zeros((len(rows), n))
                y[:, free] = yf
                finish(rows, y, extra=2.0 * eta)
                if certified(rows).all():
                    break
                gap *= 1e-2
        else:
            geom_f = EllipsoidGeometry.from_matrix(B[:, free])

            def certify(yf, done, rows=rows, free=free):
                y = np.zeros((len(rows), n))
                y[:, free] = yf
                live = ~done
                finish(rows[live], y[live])
                out = np.zeros(len(rows), dtype=bool)
                out[live] = certified(rows[live])
                return out

            yf, k = _ascent(xf, lo[rows][:, free], hi[rows][:, free], geom_f, r[rows], tol, certify=certify)
            iters += k
            y = np.zeros((len(rows), n))
            y[:, free] = yf
            finish(rows, y)
    return LinearMaxBatch(values, points, bounds, duals, certified(np.arange(m)), iters)


@dataclass
class LinearMax:
    """Single-region result in original coordinates."""

    value: float
    point: np.ndarray
    bound: float
    dual: np.ndarray
    certified: bool

    @property
    def gap(self) -> float:
        return self.bound - self.value


def maximize_linear(region, x, tol: float = 1e-7, method: str = "barrier",
                    geometry: EllipsoidGeometry | None = None) -> LinearMax:
    """max x^T a over a level region (box intersected with ellipsoid)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (region.dim,):
        raise ModelError(f"expected x of dimension {region.dim}, got shape {x.shape}")
    c = np.asarray(region.center, dtype=float)
    geom = geometry or EllipsoidGeometry.from_matrix(region.matrix)
    base = float(c @ x)
    res = maximize_linear_batch(x, np.asarray(region.lower) - c, np.asarray(region.upper) - c,
                                region.radius, geom, tol=tol, method=method, offset=base)
    return LinearMax(base + float(res.values[0]), res.points[0] + c, base + float(res.bounds[0]),
                     res.duals[0], bool(res.certified[0]))


def minimize_dual(x, lo, hi, r, B, tol: float = 1e-9, u0=None, max_newton: int = 60):
    """Minimize h(u) directly by smoothing continuation and damped Newton.

    The kinks of h are replaced by eps-smooth surrogates (softplus, and
    sqrt(|u|^2 + eps^2)); eps shrinks geometrically and each stage is warm
    started.  A final exact line search along the last iterate removes the
    smoothing bias.  Returns (bound, u).
    """
    x = np.asarray(x, dtype=float)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    B = np.asarray(B, dtype=float)
    k = B.shape[0]
    u = np.zeros(k) if u0 is None else np.asarray(u0, dtype=float).copy()
    scale = max(float(np.abs(x).max(initial=0.0)), 1e-300)
    U, L = hi, -lo

    def smooth(u, eps):
        s = x - B.T @ u
        z = s / eps
        sp = eps * np.logaddexp(0.0, z)
        sn = eps * np.logaddexp(0.0, -z)
        sig = 0.5 * (1.0 + np.tanh(0.5 * z))
        nu = np.sqrt(u @ u + eps * eps)
        f = r * nu + U @ sp + L @ sn
        # d/ds: U sig - L (1 - sig);  s depends on u through -B^T
        ds = U * sig - L * (1.0 - sig)
        g = r * u / nu - B @ ds
        curv = (U + L) * sig * (1.0 - sig) / eps
        H = r * (np.eye(k) / nu - np.outer(u, u) / nu**3) + (B * curv) @ B.T
        return f, g, H

    eps = scale
    best_h, best_u = float(dual_bound(x, lo[None], hi[None], r, B, u)[0]), u.copy()
    while eps > 1e-12 * scale:
        for _ in range(max_newton):
            f, g, H = smooth(u, eps)
            try:
                d = -np.linalg.solve(H + 1e-14 * np.eye(k), g)
            except np.linalg.LinAlgError:
                d = -g
            dec = -(g @ d)
            if dec <= 1e-14 * max(1.0, abs(f)):
                break
            a = 1.0
            while a > 1e-12 and smooth(u + a * d, eps)[0] > f - 0.25 * a * dec:
                a *= 0.5
            u = u + a * d
        h = float(dual_bound(x, lo[None], hi[None], r, B, u)[0])
        if h < best_h:
            best_h, best_u = h, u.copy()
        eps *= 0.1
    if np.any(best_u):
        hb, ub = line_dual(x, lo[None], hi[None], np.atleast_1d(r), B, best_u[None], extra=np.ones((1, 1)))
        if hb[0] <= best_h:
            best_h, best_u = float(hb[0]), ub[0]
    return best_h, best_u
