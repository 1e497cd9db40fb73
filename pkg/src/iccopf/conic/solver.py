"""Dense primal-dual interior-point solver for small second-order cone programs.

The method runs Mehrotra predictor-corrector steps on the homogeneous
self-dual embedding with Nesterov-Todd scaling. Problems are stated as::

    minimize    c'z
    subject to  A z = b
                G_lin z <= h_lin
                || F_i z + g_i || <= a_i'z + b_i    for every cone block i

and internally mapped to ``G z + s = h``, ``s`` in the product cone.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels as _kernels

log = logging.getLogger(__name__)

MAX_ITER = 200
STEP = 0.99
REFINE = 5


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    NUMERICAL_LIMIT = "numerical_limit"


class DimensionError(ValueError):
    """Raised for inconsistent program data, before any solve."""


@dataclass(frozen=True)
class SocBlock:
    """One cone constraint ``||F z + g|| <= a'z + b0``."""

    F: np.ndarray
    g: np.ndarray
    a: np.ndarray
    b0: float = 0.0


@dataclass
class ConeProgram:
    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G_lin: np.ndarray | None = None
    h_lin: np.ndarray | None = None
    socs: list[SocBlock] = field(default_factory=list)

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.shape[0]
        if self.c.ndim != 1 or n < 1:
            raise DimensionError("objective must be a nonempty vector")
        self.A, self.b = _pair(self.A, self.b, n, "equality")
        self.G_lin, self.h_lin = _pair(self.G_lin, self.h_lin, n, "linear inequality")
        blocks = []
        for i, blk in enumerate(self.socs):
            F = np.asarray(blk.F, dtype=float).reshape(-1, n) if np.size(blk.F) else np.zeros((0, n))
            g = np.asarray(blk.g, dtype=float).reshape(-1)
            a = np.asarray(blk.a, dtype=float).reshape(-1)
            if F.shape[1] != n or g.shape[0] != F.shape[0] or a.shape[0] != n:
                raise DimensionError(f"cone block {i} has inconsistent dimensions")
            blocks.append(SocBlock(F, g, a, float(blk.b0)))
        self.socs = blocks

    @property
    def n(self):
        return self.c.shape[0]

    def standard_form(self):
        """Return ``(G, h, l, q)`` with cone slack ``s = h - G z``."""
        rows = [self.G_lin]
        rhs = [self.h_lin]
        q = []
        for blk in self.socs:
            rows.append(-blk.a[None, :])
            rows.append(-blk.F)
            rhs.append([blk.b0])
            rhs.append(blk.g)
            q.append(1 + blk.F.shape[0])
        G = np.vstack(rows) if rows else np.zeros((0, self.n))
        h = np.concatenate([np.asarray(r, dtype=float) for r in rhs])
        return G, h, self.G_lin.shape[0], np.asarray(q, dtype=np.intp)


def _pair(M, v, n, what):
    if M is None and v is None:
        return np.zeros((0, n)), np.zeros(0)
    if M is None or v is None:
        raise DimensionError(f"{what} data needs both matrix and right-hand side")
    M = np.asarray(M, dtype=float)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if M.ndim == 1:
        M = M.reshape(-1, n) if M.size else np.zeros((0, n))
    if M.shape[1] != n or M.shape[0] != v.shape[0] or v.ndim != 1:
        raise DimensionError(f"{what} matrix is {M.shape}, rhs {v.shape}, n = {n}")
    return M, v


@dataclass
class ConeSolution:
    status: Status
    z: np.ndarray
    y: np.ndarray
    lam_lin: np.ndarray
    soc_duals: list
    objective: float
    dual_objective: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int

    @property
    def relative_gap(self):
        return self.gap / (1.0 + abs(self.objective))

    @property
    def optimal(self):
        return self.status is Status.OPTIMAL


def _norm(x):
    return float(np.linalg.norm(x))


class _Kkt:
    """Factored Newton system for the current scaling.

    Solves ``A'dy + G'dz = rx``, ``A dx = ry``, ``G dx - W^2 dz = rz`` through
    the scaled augmented matrix ``[[0, A', Gs'], [A, 0, 0], [Gs, 0, -I]]``
    with ``Gs = W^{-1} G`` and unknown ``W dz``; this avoids the squared
    conditioning of the normal equations near the boundary.
    """

    def __init__(self, A, G, scaling, l, q, kern):
        self.A, self.G = A, G
        self.scaling, self.l, self.q, self.kern = scaling, l, q, kern
        d, beta, v = scaling
        self.Gs = kern.scale(G, d, beta, v, l, q, inverse=True)
        n, p, m = G.shape[1], A.shape[0], G.shape[0]
        K = np.zeros((n + p + m, n + p + m))
        K[:n, n:n + p] = A.T
        K[n:n + p, :n] = A
        K[:n, n + p:] = self.Gs.T
        K[n + p:, :n] = self.Gs
        K[n + p:, n + p:] = -np.eye(m)
        # tiny shift keeps rank-deficient data factorizable
        reg = 1e-12
        K[:n, :n] += reg * np.eye(n)
        K[n:n + p, n:n + p] -= reg * np.eye(p)
        self.n, self.p, self.m = n, p, m
        self.lu = scipy.linalg.lu_factor(K, check_finite=False)

    def _scale(self, x, inverse):
        d, beta, v = self.scaling
        return self.kern.scale(x, d, beta, v, self.l, self.q, inverse=inverse)

    def _raw(self, rx, ry, rz):
        rhs = np.concatenate([rx, ry, self._scale(rz, True)])
        sol = scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)
        n, p = self.n, self.p
        return sol[:n], sol[n:n + p], self._scale(sol[n + p:], True)

    def _residual(self, rx, ry, rz, dx, dy, dz):
        w2dz = self._scale(self._scale(dz, False), False)
        return rx - self.A.T @ dy - self.G.T @ dz, ry - self.A @ dx, rz - self.G @ dx + w2dz

    def solve(self, rx, ry, rz, refine=REFINE):
        """Solve with iterative refinement, stopping once the residual stops shrinking."""
        dx, dy, dz = self._raw(rx, ry, rz)
        err = self._residual(rx, ry, rz, dx, dy, dz)
        size = max(_norm(e) for e in err)
        for _ in range(refine):
            if size == 0.0:
                break
            cx, cy, cz = self._raw(*err)
            nx, ny, nz = dx + cx, dy + cy, dz + cz
            nerr = self._residual(rx, ry, rz, nx, ny, nz)
            nsize = max(_norm(e) for e in nerr)
            if not nsize < size:
                break
            dx, dy, dz, err, size = nx, ny, nz, nerr, nsize
        return dx, dy, dz


def solve(program: ConeProgram, tolerance: float = 1e-8, kernels=None, max_iter: int = MAX_ITER) -> ConeSolution:
    """Solve ``program`` and return primal and dual certificates.

    ``tolerance`` bounds the relative primal and dual residuals and the
    duality gap at optimal status; infeasibility certificates are accepted
    at the same threshold.
    """
    if not (1e-10 <= tolerance <= 1e-4):
        raise ValueError(f"tolerance {tolerance} outside [1e-10, 1e-4]")
    kern = kernels or _kernels.active
    c = program.c
    A, b = program.A, program.b
    G, h, l, q = program.standard_form()
    n, p, m = c.shape[0], A.shape[0], G.shape[0]
    degree = l + len(q)

    resx0 = max(1.0, _norm(c))
    resy0 = max(1.0, _norm(b))
    resz0 = max(1.0, _norm(h))

    e = kern.identity(l, q)

    # initial point: least-norm primal and dual slacks, shifted into the cone
    if m:
        ident = (np.ones(l), np.ones(len(q)), kern.identity(0, q))
        kkt0 = _Kkt(A, G, ident, l, q, kern)
        x, y, zt = kkt0.solve(np.zeros(n), b, h)
        s = -zt
        _, y, z = kkt0.solve(-c, np.zeros(p), np.zeros(m))
        ts = kern.boundary_offset(s, l, q)
        tz = kern.boundary_offset(z, l, q)
        nrms, nrmz = max(1.0, _norm(s)), max(1.0, _norm(z))
        if ts >= -1e-8 * nrms:
            s = s + (1.0 + ts) * e
        if tz >= -1e-8 * nrmz:
            z = z + (1.0 + tz) * e
    else:
        x = np.zeros(n)
        y = np.zeros(p)
        s = np.zeros(0)
        z = np.zeros(0)
    tau, kappa = 1.0, 1.0

    status = Status.NUMERICAL_LIMIT
    it = 0
    pres = dres = gap = np.inf
    pcost = dcost = np.nan
    cert = None
    while True:
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = s + G @ x - h * tau
        cx, by, hz = c @ x, b @ y, h @ z
        rt = kappa + cx + by + hz
        pres = max(_norm(ry) / resy0, _norm(rz) / resz0) / tau
        dres = _norm(rx) / resx0 / tau
        pcost, dcost = cx / tau, -(by + hz) / tau
        gap = float(s @ z) / tau**2
        scale_obj = 1.0 + abs(pcost)
        log.debug("it %3d pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e", it, pres, dres, gap, tau, kappa)
        if pres <= tolerance and dres <= tolerance and gap <= tolerance * scale_obj and abs(pcost - dcost) <= tolerance * scale_obj:
            status = Status.OPTIMAL
            break
        if by + hz < 0:
            pinf = _norm(A.T @ y + G.T @ z) / resx0 / -(by + hz)
            if pinf <= tolerance:
                status = Status.PRIMAL_INFEASIBLE
                cert = -(by + hz)
                break
        if cx < 0:
            dinf = max(_norm(A @ x) / resy0, _norm(s + G @ x) / resz0) / -cx
            if dinf <= tolerance:
                status = Status.DUAL_INFEASIBLE
                cert = -cx
                break
        if it >= max_iter:
            log.debug("iteration cap reached: pres=%.3g dres=%.3g gap=%.3g", pres, dres, gap)
            break
        it += 1

        try:
            dsc, beta, v, lam = kern.nt_scaling(s, z, l, q)
            if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(beta))):
                raise FloatingPointError("non-finite scaling")
            kkt = _Kkt(A, G, (dsc, beta, v), l, q, kern)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError, ZeroDivisionError) as exc:
            log.debug("scaling breakdown at iteration %d: %s", it, exc)
            break

        def W(u):
            return kern.scale(u, dsc, beta, v, l, q)

        x1, y1, z1 = kkt.solve(-c, b, h)
        q1 = c @ x1 + b @ y1 + h @ z1 - kappa / tau
        mu = (float(lam @ lam) + tau * kappa) / (degree + 1)

        def newton(dx_rhs, dy_rhs, dz_rhs, dt_rhs, ds_rhs, dk_rhs):
            lds = kern.jdiv(lam, ds_rhs, l, q)
            x2, y2, z2 = kkt.solve(dx_rhs, dy_rhs, dz_rhs - W(lds))
            dtau = (dt_rhs - dk_rhs / tau - (c @ x2 + b @ y2 + h @ z2)) / q1
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dkap = (dk_rhs - kappa * dtau) / tau
            wdz = W(dz)
            # ds from the linearized primal rows rather than through W, which
            # loses digits near the cone boundary
            ds = dz_rhs - G @ dx + h * dtau
            dss = kern.scale(ds, dsc, beta, v, l, q, inverse=True)
            return dx, dy, dz, dtau, dss, wdz, dkap, ds

        def step_to_boundary(dss, wdz, dtau, dkap):
            t = max(kern.max_step(lam, dss, l, q), kern.max_step(lam, wdz, l, q)) if m else 0.0
            t = max(t, -dtau / tau, -dkap / kappa)
            return np.inf if t <= 0 else 1.0 / t

        # predictor
        aff = newton(-rx, -ry, -rz, -rt, -kern.jprod(lam, lam, l, q), -tau * kappa)
        alpha_a = min(1.0, step_to_boundary(aff[4], aff[5], aff[3], aff[6]))
        sigma = (1.0 - alpha_a) ** 3
        # combined predictor-corrector
        ds_rhs = -kern.jprod(lam, lam, l, q) - kern.jprod(aff[4], aff[5], l, q) + sigma * mu * e
        dk_rhs = -tau * kappa - aff[3] * aff[6] + sigma * mu
        f = 1.0 - sigma
        dx, dy, dz, dtau, dss, wdz, dkap, ds = newton(-f * rx, -f * ry, -f * rz, -f * rt, ds_rhs, dk_rhs)
        alpha = min(1.0, STEP * step_to_boundary(dss, wdz, dtau, dkap))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            log.debug("step length collapsed at iteration %d", it)
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            break

    if status is Status.PRIMAL_INFEASIBLE:
        return _result(status, np.full(n, np.nan), y / cert, z / cert, l, q, np.nan, np.nan, np.nan, pres, dres, it)
    if status is Status.DUAL_INFEASIBLE:
        return _result(status, x / cert, np.full(p, np.nan), np.full(m, np.nan), l, q, np.nan, np.nan, np.nan, pres, dres, it)
    return _result(status, x / tau, y / tau, z / tau, l, q, pcost, dcost, gap, pres, dres, it)


def _result(status, x, y, z, l, q, pcost, dcost, gap, pres, dres, it):
    duals = []
    start = l
    for size in q:
        duals.append(z[start:start + size].copy())
        start += size
    return ConeSolution(
        status=status,
        z=x,
        y=y,
        lam_lin=z[:l].copy(),
        soc_duals=duals,
        objective=float(pcost),
        dual_objective=float(dcost),
        gap=float(gap),
        primal_residual=float(pres),
        dual_residual=float(dres),
        iterations=it,
    )
