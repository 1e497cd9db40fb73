"""Slack surrogate of the chance-constrained OPF and its beta-sensitivity.

For a fixed security profile the surrogate solves::

    min ||s||  s.t.  A x = b,  E x <= f,  s >= 0,
                     wbar_k'x - s_k + phi_k * ||Sigma^(1/2)(M_k x + m_k)|| <= d_k

whose optimal value is zero exactly when the chance-constrained OPF is
feasible. The dual ``lambda_k`` of each chance row gives the derivative of
that value with respect to the scalar security level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import conic
from .dcgrid import CompactModel
from .gaussmath import BETA_MAX, DomainError, dphi_dbeta, std_normal_icdf

log = logging.getLogger(__name__)

UNIT_TOL = 1e-9


class SolverError(RuntimeError):
    """The cone solver stopped without a usable certificate."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class SecurityProfile:
    """Security levels ``beta_k = beta * u_k + beta0_k`` along a unit direction."""

    u: np.ndarray
    beta0: np.ndarray
    beta: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).reshape(-1)
        b0 = np.broadcast_to(np.asarray(self.beta0, dtype=float), u.shape).copy()
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "beta0", b0)
        object.__setattr__(self, "beta", float(self.beta))
        if np.any(u < 0):
            raise DomainError("direction components must be nonnegative")
        if u.size and abs(np.linalg.norm(u) - 1.0) > UNIT_TOL:
            raise DomainError(f"direction must have unit 2-norm, got {np.linalg.norm(u):.12g}")
        if np.any(b0 < 0.5) or np.any(b0 >= 1.0):
            raise DomainError("offsets beta0 must lie in [0.5, 1)")
        if not self.beta >= 0:
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        beta_levels(self)

    def at(self, beta):
        return SecurityProfile(self.u, self.beta0, beta)


def beta_levels(profile):
    levels = profile.beta * profile.u + profile.beta0
    bad = np.flatnonzero((levels < 0.5) | (levels >= BETA_MAX))
    if bad.size:
        k = int(bad[0])
        raise DomainError(f"security level {float(levels[k])!r} of row {k} outside [0.5, 1 - 1e-12)")
    return levels


@dataclass
class SurrogateSolution:
    x_star: np.ndarray
    s_star: np.ndarray
    snorm: float
    lambda_star: np.ndarray
    phi: np.ndarray
    nu: np.ndarray
    d_beta: float
    status: conic.Status
    objective: float = float("nan")
    iterations: int = 0


def build_surrogate(model: CompactModel, profile: SecurityProfile):
    """Assemble the surrogate cone program; return it with the chance-row -> linear-row map.

    Variable layout: ``[x (n), s (K), t (K), sigma]``; ``t_k`` bounds the
    standard deviation of row ``k`` and ``sigma`` bounds ``||s||``.
    """
    K = len(model.chance_rows)
    if profile.u.shape[0] != K:
        raise DomainError(f"profile has {profile.u.shape[0]} rows, model has {K}")
    levels = beta_levels(profile)
    phi = np.array([std_normal_icdf(b) for b in levels])
    n = model.n
    N = n + 2 * K + 1
    xs, ss, ts, sg = slice(0, n), slice(n, n + K), slice(n + K, n + 2 * K), n + 2 * K

    Wm, d, F, g = model.stacked()
    lin_G, lin_h = [], []
    chance = np.zeros((K, N))
    chance[:, xs] = Wm
    chance[:, ss] = -np.eye(K)
    chance[:, ts] = np.diag(phi)
    lin_G.append(chance)
    lin_h.append(d)
    nonneg = np.zeros((K, N))
    nonneg[:, ss] = -np.eye(K)
    lin_G.append(nonneg)
    lin_h.append(np.zeros(K))
    det = np.zeros((model.E_ineq.shape[0], N))
    det[:, xs] = model.E_ineq
    lin_G.append(det)
    lin_h.append(model.f_ineq)

    A = np.zeros((model.A_eq.shape[0], N))
    A[:, xs] = model.A_eq
    b = [model.b_eq]
    socs = []
    # ||s|| <= sigma
    Fs = np.zeros((K, N))
    Fs[:, ss] = np.eye(K)
    a = np.zeros(N)
    a[sg] = 1.0
    socs.append(conic.SocBlock(Fs, np.zeros(K), a))
    pinned = []
    for k in range(K):
        if phi[k] == 0.0:
            # no uncertainty term: t_k is unused and pinned to zero
            pinned.append(k)
            continue
        Fk = np.zeros((F.shape[1], N))
        Fk[:, xs] = F[k]
        ak = np.zeros(N)
        ak[n + K + k] = 1.0
        socs.append(conic.SocBlock(Fk, g[k], ak))
    if pinned:
        P = np.zeros((len(pinned), N))
        P[np.arange(len(pinned)), [n + K + k for k in pinned]] = 1.0
        A = np.vstack([A, P])
        b.append(np.zeros(len(pinned)))

    c = np.zeros(N)
    c[sg] = 1.0
    program = conic.ConeProgram(c=c, A=A, b=np.concatenate(b), G_lin=np.vstack(lin_G), h_lin=np.concatenate(lin_h), socs=socs)
    return program, np.arange(K)


def chance_violation(model, x, phi):
    """Per-row excess ``wbar'x + phi*nu(x) - d`` (negative when satisfied)."""
    Wm, d, _, _ = model.stacked()
    return Wm @ x + phi * model.nu(x) - d


def solve_surrogate(model: CompactModel, profile: SecurityProfile, tolerance=1e-8) -> SurrogateSolution:
    K = len(model.chance_rows)
    program, row_map = build_surrogate(model, profile)
    sol = conic.solve(program, tolerance)
    if not sol.optimal:
        raise SolverError(
            f"surrogate solve ended with {sol.status.value} at beta={profile.beta!r} "
            f"(pres={sol.primal_residual:.2e}, dres={sol.dual_residual:.2e}, iters={sol.iterations})",
            sol,
        )
    n = model.n
    x = sol.z[:n]
    phi = np.array([std_normal_icdf(b) for b in beta_levels(profile)])
    nu = model.nu(x)
    # the smallest slack that makes x* feasible; its norm is the objective of
    # a feasible surrogate point and agrees with sol.objective to tolerance
    s = np.maximum(chance_violation(model, x, phi), 0.0)
    snorm = float(np.linalg.norm(s))
    lam = sol.lam_lin[row_map].copy()
    if snorm == 0.0:
        # zero duals certify an optimal value of zero exactly
        lam[:] = 0.0
    out = SurrogateSolution(
        x_star=x,
        s_star=s,
        snorm=snorm,
        lambda_star=lam,
        phi=phi,
        nu=nu,
        d_beta=0.0,
        status=sol.status,
        objective=sol.objective,
        iterations=sol.iterations,
    )
    out.d_beta = compute_sensitivity(out, profile)
    log.debug("surrogate beta=%.10g snorm=%.3e D=%.6g iters=%d", profile.beta, snorm, out.d_beta, sol.iterations)
    return out


def compute_sensitivity(sol: SurrogateSolution, profile: SecurityProfile) -> float:
    """Derivative of the optimal slack norm with respect to ``beta``."""
    total = 0.0
    for uk, lk, nk, pk in zip(profile.u, sol.lambda_star, sol.nu, sol.phi):
        if uk == 0.0 or lk == 0.0:
            continue
        total += lk * nk * dphi_dbeta(pk, uk)
    return float(total)


def fd_sensitivity(model: CompactModel, profile: SecurityProfile, step: float, tolerance=1e-8) -> float:
    """Central finite difference of the optimal slack norm, two fresh solves."""
    if not step > 0:
        raise DomainError("finite-difference step must be positive")
    hi = profile.at(profile.beta + step)
    below = profile.beta - step
    if below >= 0:
        lo = profile.at(below)
    else:
        # same levels, with the negative part folded into the offsets
        lo = SecurityProfile(profile.u, profile.beta0 + below * profile.u, 0.0)
    return (solve_surrogate(model, hi, tolerance).snorm - solve_surrogate(model, lo, tolerance).snorm) / (2.0 * step)
