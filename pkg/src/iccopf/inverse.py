"""Largest feasible security level along a direction, and the forward CC-OPF.

The inverse iteration starts from an exterior point near the cap and walks
the scalar ``beta`` down with Newton-like steps on the surrogate slack norm::

    beta_hat = beta - eta * snorm(beta) / D(beta)

A candidate whose sensitivity vanishes lies in the interior (zero slack, zero
duals); it is rolled back and the step factor halved. Accepted iterates
therefore stay exterior and approach the boundary from above.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import conic
from .dcgrid import CompactModel
from .gaussmath import DomainError, std_normal_icdf
from .surrogate import SecurityProfile, SolverError, beta_levels, fd_sensitivity, solve_surrogate

log = logging.getLogger(__name__)


class Termination(str, Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration_cap"
    FEASIBLE_AT_CAP = "direction_feasible_at_cap"


class DegenerateDirectionError(DomainError):
    """The direction has no positive component, so beta cannot raise any level."""


class InfeasibleBaselineError(DomainError):
    """The offsets alone (beta = 0) already leave the CC-OPF infeasible."""


class AnomalyError(RuntimeError):
    """An exterior iterate reported a vanishing sensitivity."""

    def __init__(self, message, beta, snorm, d_beta, trace):
        super().__init__(message)
        self.beta = beta
        self.snorm = snorm
        self.d_beta = d_beta
        self.trace = trace


@dataclass(frozen=True)
class InverseSettings:
    eps_s: float = 1e-6
    eps_d: float = 1e-8
    max_iter: int = 50
    beta_cap: float = 1.0 - 1e-6
    fd_check: bool = False
    fd_step: float = 1e-3
    tolerance: float = 1e-8
    fallback: bool = True

    def __post_init__(self):
        if not (self.eps_s > 0 and self.eps_d > 0):
            raise DomainError("eps_s and eps_d must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")
        if not (0.5 < self.beta_cap < 1.0):
            raise DomainError("beta_cap must lie in (0.5, 1)")
        if not self.fd_step > 0:
            raise DomainError("fd_step must be positive")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    beta: float
    snorm: float
    d_beta: float
    eta: float
    accepted: bool


@dataclass(frozen=True)
class FdCheck:
    beta: float
    analytic: float
    finite_difference: float

    @property
    def relative_error(self):
        return abs(self.analytic - self.finite_difference) / max(abs(self.finite_difference), 1e-300)


@dataclass
class InverseResult:
    beta_max: float
    beta_levels_at_max: np.ndarray
    trace: list[IterationRecord]
    termination: Termination
    snorm: float = 0.0
    d_beta: float = 0.0
    fallback: bool = False
    fd_check: FdCheck | None = None
    anomaly: str | None = None

    @property
    def iterations(self):
        return max(len(self.trace) - 1, 0)


@dataclass
class CcopfSolution:
    x_star: np.ndarray
    cost: float
    feasible: bool
    status: conic.Status


def initialize_beta(model: CompactModel, profile: SecurityProfile, settings: InverseSettings) -> float:
    """Largest beta keeping every level at or below ``beta_cap``."""
    pos = profile.u > 0
    if not np.any(pos):
        raise DegenerateDirectionError("direction has no positive component")
    if np.any(profile.beta0 > settings.beta_cap):
        raise DomainError("an offset already exceeds beta_cap")
    return float(np.min((settings.beta_cap - profile.beta0[pos]) / profile.u[pos]))


def newton_candidate(beta, snorm, d_beta, eta=1.0):
    """One damped Newton step on the slack norm, clamped at zero."""
    return max(beta - eta * snorm / d_beta, 0.0)


def _levels_result(profile, beta, trace, termination, sol, **extra):
    return InverseResult(
        beta_max=beta,
        beta_levels_at_max=beta_levels(profile.at(beta)),
        trace=trace,
        termination=termination,
        snorm=sol.snorm,
        d_beta=sol.d_beta,
        **extra,
    )


def solve_inverse(model: CompactModel, profile: SecurityProfile, settings: InverseSettings | None = None) -> InverseResult:
    """Run the rollback Newton iteration; the ``beta`` field of ``profile`` is ignored."""
    settings = settings or InverseSettings()
    tol = settings.tolerance
    beta = initialize_beta(model, profile, settings)
    sol = solve_surrogate(model, profile.at(beta), tol)
    eta = 1.0
    trace = [IterationRecord(0, beta, sol.snorm, sol.d_beta, eta, True)]
    if sol.snorm <= settings.eps_s:
        log.info("direction feasible up to the cap (beta=%.10g)", beta)
        return _levels_result(profile, beta, trace, Termination.FEASIBLE_AT_CAP, sol)

    interior = 0.0  # largest beta seen with a vanishing sensitivity
    t = 0
    while t < settings.max_iter and sol.snorm > settings.eps_s:
        if sol.d_beta <= settings.eps_d:
            msg = (f"vanishing sensitivity D={sol.d_beta:.3e} at exterior beta={beta:.12g} "
                   f"(snorm={sol.snorm:.3e})")
            if not settings.fallback:
                raise AnomalyError(msg, beta, sol.snorm, sol.d_beta, trace)
            log.warning("%s; falling back to bisection", msg)
            return _bisection_fallback(model, profile, settings, interior, beta, trace, msg)
        t += 1
        cand = newton_candidate(beta, sol.snorm, sol.d_beta, eta)
        csol = solve_surrogate(model, profile.at(cand), tol)
        if abs(csol.d_beta) <= settings.eps_d:
            trace.append(IterationRecord(t, cand, csol.snorm, csol.d_beta, eta, False))
            if csol.snorm > settings.eps_s:
                # exterior but flat: not an overshoot, treat as the anomaly case
                sol, beta = csol, cand
                continue
            interior = max(interior, cand)
            eta *= 0.5
            continue
        trace.append(IterationRecord(t, cand, csol.snorm, csol.d_beta, eta, True))
        if cand == 0.0 and csol.snorm > settings.eps_s:
            raise InfeasibleBaselineError(
                f"CC-OPF is infeasible at beta=0 (snorm={csol.snorm:.6g}); no nonnegative beta is feasible")
        beta, sol, eta = cand, csol, 1.0

    if sol.snorm > settings.eps_s:
        log.warning("iteration cap %d reached at beta=%.12g, snorm=%.3e", settings.max_iter, beta, sol.snorm)
        return _levels_result(profile, beta, trace, Termination.ITERATION_CAP, sol)
    result = _levels_result(profile, beta, trace, Termination.CONVERGED, sol)
    if settings.fd_check:
        result.fd_check = _exterior_fd_check(model, profile, settings, beta, trace[0].beta)
    return result


def _exterior_fd_check(model, profile, settings, beta_max, beta_start):
    """Analytic and finite-difference sensitivity at a point two fd steps outside the boundary."""
    beta = beta_max + 2.0 * settings.fd_step
    if beta + settings.fd_step > beta_start:
        return None
    sol = solve_surrogate(model, profile.at(beta), settings.tolerance)
    return FdCheck(beta, sol.d_beta, fd_sensitivity(model, profile.at(beta), settings.fd_step, settings.tolerance))


def _bisection_fallback(model, profile, settings, lo, hi, trace, reason):
    if solve_surrogate(model, profile.at(lo), settings.tolerance).snorm > settings.eps_s:
        raise InfeasibleBaselineError(f"CC-OPF is infeasible at beta={lo:.12g}; bisection has no interior end")
    lo, hi = bisect_boundary(model, profile, settings, lo, hi)
    sol = solve_surrogate(model, profile.at(lo), settings.tolerance)
    return _levels_result(profile, lo, trace, Termination.CONVERGED, sol, fallback=True, anomaly=reason)


def bisect_boundary(model, profile, settings, lo, hi, width=1e-9):
    """Shrink ``[lo, hi]`` with ``snorm(lo) <= eps_s < snorm(hi)`` to the given width."""
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if solve_surrogate(model, profile.at(mid), settings.tolerance).snorm <= settings.eps_s:
            lo = mid
        else:
            hi = mid
    return lo, hi


def build_ccopf(model: CompactModel, levels) -> conic.ConeProgram:
    levels = np.asarray(levels, dtype=float)
    K = len(model.chance_rows)
    if levels.shape != (K,):
        raise DomainError(f"expected {K} security levels, got shape {levels.shape}")
    if np.any(levels < 0.5):
        raise DomainError("security levels must be at least 0.5")
    phi = np.array([std_normal_icdf(b) for b in levels])
    Wm, d, F, g = model.stacked()
    lin_G, lin_h, socs = [model.E_ineq], [model.f_ineq], []
    for k in range(K):
        if phi[k] == 0.0:
            lin_G.append(Wm[k][None, :])
            lin_h.append(d[k:k + 1])
        else:
            # phi * ||F x + g|| <= d - wbar'x
            socs.append(conic.SocBlock(phi[k] * F[k], phi[k] * g[k], -Wm[k], float(d[k])))
    return conic.ConeProgram(c=model.cost.copy(), A=model.A_eq, b=model.b_eq,
                             G_lin=np.vstack(lin_G), h_lin=np.concatenate(lin_h), socs=socs)


def solve_ccopf(model: CompactModel, levels, tolerance=1e-8) -> CcopfSolution:
    """Minimum-cost dispatch meeting every chance row at its security level."""
    sol = conic.solve(build_ccopf(model, levels), tolerance)
    if sol.status == conic.Status.OPTIMAL:
        return CcopfSolution(sol.z, float(model.cost @ sol.z), True, sol.status)
    if sol.status == conic.Status.PRIMAL_INFEASIBLE:
        return CcopfSolution(np.full(model.n, np.nan), float("nan"), False, sol.status)
    raise SolverError(
        f"CC-OPF solve ended with {sol.status.value} (pres={sol.primal_residual:.2e}, "
        f"dres={sol.dual_residual:.2e}, iters={sol.iterations})",
        sol,
    )


@dataclass(frozen=True)
class BoundaryCheck:
    below_feasible: bool
    above_infeasible: bool
    below: CcopfSolution = field(repr=False)
    above: CcopfSolution = field(repr=False)

    @property
    def certified(self):
        return self.below_feasible and self.above_infeasible


def verify_boundary(model: CompactModel, profile: SecurityProfile, beta_max: float, delta: float = 1e-5) -> BoundaryCheck:
    """CC-OPF feasibility just at and just beyond ``beta_max``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    below = solve_ccopf(model, beta_levels(profile.at(beta_max)))
    above = solve_ccopf(model, beta_levels(profile.at(beta_max + delta)))
    return BoundaryCheck(below.feasible, not above.feasible, below, above)
