import dataclasses
import math
import types

import numpy as np
import pytest
from scipy.optimize import linprog

import oracles
from toys import pinned_toy

from iccopf import inverse
from iccopf.gaussmath import DomainError
from iccopf.inverse import (AnomalyError, DegenerateDirectionError, InfeasibleBaselineError, InverseSettings,
                            Termination, bisect_boundary, initialize_beta, newton_candidate, solve_ccopf,
                            solve_inverse, verify_boundary)
from iccopf.surrogate import SecurityProfile, beta_levels, solve_surrogate

TOY = pinned_toy(p0=9.5, d=10.0, spread=0.5)
TOY_PROFILE = SecurityProfile([1.0], 0.5)
TOY_EXACT = oracles.toy_beta_max(10.0, 9.5, 0.5) - 0.5


def test_newton_candidate():
    assert newton_candidate(0.9, 0.05, 2.5, 1.0) == pytest.approx(0.88, abs=1e-15)
    assert newton_candidate(0.9, 0.05, 2.5, 0.5) == pytest.approx(0.89, abs=1e-15)
    assert newton_candidate(0.01, 1.0, 1.0) == 0.0


def test_initialize_beta(sys14):
    b = initialize_beta(sys14.model, sys14.profile, InverseSettings())
    assert b == pytest.approx((0.05 - 1e-6) * math.sqrt(2), rel=1e-12)
    assert b == pytest.approx(0.070709, abs=1e-6)


def test_degenerate_direction():
    prof = types.SimpleNamespace(u=np.zeros(3), beta0=np.full(3, 0.9))
    with pytest.raises(DegenerateDirectionError):
        initialize_beta(None, prof, InverseSettings())


def test_offset_above_cap():
    prof = SecurityProfile([1.0], 0.9999995)
    with pytest.raises(DomainError):
        initialize_beta(TOY, prof, InverseSettings())


@pytest.mark.parametrize("kw", [dict(eps_s=0.0), dict(eps_d=-1.0), dict(max_iter=0), dict(max_iter=2.5),
                                dict(beta_cap=1.0), dict(beta_cap=0.4), dict(fd_step=0.0)])
def test_settings_validation(kw):
    with pytest.raises(DomainError):
        InverseSettings(**kw)


def test_toy_matches_closed_form():
    res = solve_inverse(TOY, TOY_PROFILE)
    assert res.termination is Termination.CONVERGED
    assert res.beta_max == pytest.approx(TOY_EXACT, abs=1e-6)
    assert res.beta_levels_at_max[0] == pytest.approx(TOY_EXACT + 0.5, abs=1e-6)
    assert res.snorm <= 1e-6 and not res.fallback


@pytest.mark.parametrize("p0, d, spread", [(9.0, 10.0, 0.4), (9.9, 10.0, 1.0), (5.0, 10.0, 2.5)])
def test_toy_family(p0, d, spread):
    model = pinned_toy(p0=p0, d=d, spread=spread)
    exact = oracles.toy_beta_max(d, p0, spread)
    res = solve_inverse(model, TOY_PROFILE)
    assert res.beta_max + 0.5 == pytest.approx(exact, abs=1e-6)


def test_multi_row_toy_matches_bisection():
    model = pinned_toy(p0=9.5, d=10.0, spread=0.5, extra_rows=[(10.3, 0.2), (10.1, 0.4)])
    u = np.array([1.0, 2.0, 0.5])
    prof = SecurityProfile(u / np.linalg.norm(u), 0.5)
    res = solve_inverse(model, prof)
    ref = oracles.bisect_beta_max(lambda b: solve_surrogate(model, prof.at(b)).snorm, 0.0, res.trace[0].beta)
    assert res.beta_max == pytest.approx(ref, abs=1e-4)
    # the tightest row decides: every level sits within its own closed-form boundary
    lv = beta_levels(prof.at(res.beta_max))
    bounds = [oracles.toy_beta_max(10.0, 9.5, 0.5), oracles.toy_beta_max(10.3, 9.5, 0.2),
              oracles.toy_beta_max(10.1, 9.5, 0.4)]
    assert np.all(lv <= np.array(bounds) + 1e-6)
    assert np.min(np.array(bounds) - lv) <= 1e-6


def test_feasible_at_cap():
    model = pinned_toy(p0=9.5, d=100.0, spread=0.5)
    res = solve_inverse(model, TOY_PROFILE)
    assert res.termination is Termination.FEASIBLE_AT_CAP
    assert res.iterations == 0
    assert res.beta_levels_at_max[0] == pytest.approx(1 - 1e-6)


def test_iteration_cap():
    res = solve_inverse(TOY, TOY_PROFILE, InverseSettings(max_iter=1))
    assert res.termination is Termination.ITERATION_CAP
    assert res.iterations == 1 and res.snorm > 1e-6


def test_infeasible_baseline():
    model = pinned_toy(p0=10.5, d=10.0, spread=0.5)
    with pytest.raises(InfeasibleBaselineError):
        solve_inverse(model, TOY_PROFILE)


def test_fd_check():
    res = solve_inverse(TOY, TOY_PROFILE, InverseSettings(fd_check=True))
    assert res.fd_check is not None
    assert res.fd_check.beta == pytest.approx(res.beta_max + 2e-3)
    assert res.fd_check.relative_error <= 1e-3


def _flat_above(threshold):
    real = inverse.solve_surrogate

    def fake(model, profile, tolerance=1e-8):
        sol = real(model, profile, tolerance)
        if profile.beta > threshold:
            sol.d_beta = 0.0
        return sol
    return fake


def test_anomaly_raises_without_fallback(monkeypatch):
    monkeypatch.setattr(inverse, "solve_surrogate", _flat_above(0.45))
    with pytest.raises(AnomalyError) as info:
        solve_inverse(TOY, TOY_PROFILE, InverseSettings(fallback=False))
    assert info.value.snorm > 1e-6 and info.value.d_beta == 0.0


def test_anomaly_falls_back_to_bisection(monkeypatch):
    monkeypatch.setattr(inverse, "solve_surrogate", _flat_above(0.45))
    res = solve_inverse(TOY, TOY_PROFILE)
    assert res.fallback and res.anomaly
    assert res.termination is Termination.CONVERGED
    assert res.beta_max == pytest.approx(TOY_EXACT, abs=1e-6)


def test_bisect_boundary():
    lo, hi = bisect_boundary(TOY, TOY_PROFILE, InverseSettings(), 0.0, 0.49)
    assert hi - lo <= 1e-9
    assert lo <= TOY_EXACT + 1e-6 <= hi + 1e-5


def test_rollback_discipline(sys39):
    trace = sys39.result.trace
    rejected = [r for r in trace if not r.accepted]
    assert rejected, "case39 exercises the rollback path"
    for r in rejected:
        assert abs(r.d_beta) <= InverseSettings().eps_d
    eta = 1.0
    for r in trace[1:]:
        assert r.eta == eta
        eta = 1.0 if r.accepted else eta / 2


def test_accepted_iterates_decrease(sys14, sys39):
    for system in (sys14, sys39):
        betas = [r.beta for r in system.result.trace if r.accepted]
        assert all(b < a for a, b in zip(betas, betas[1:]))


def test_ccopf_phi_zero_is_deterministic_dispatch(sys14):
    m = sys14.model
    sol = solve_ccopf(m, np.full(25, 0.5))
    W, d, _, _ = m.stacked()
    ref = linprog(m.cost, A_ub=np.vstack([m.E_ineq, W]), b_ub=np.concatenate([m.f_ineq, d]),
                  A_eq=m.A_eq, b_eq=m.b_eq, bounds=[(None, None)] * m.n, method="highs")
    assert sol.feasible and ref.status == 0
    assert sol.cost == pytest.approx(ref.fun, rel=1e-7)


def test_ccopf_infeasible_core(sys14):
    m = sys14.model
    f = m.f_ineq.copy()
    f[:5] = -1e6  # every generator above 1e6 MW
    sol = solve_ccopf(dataclasses.replace(m, f_ineq=f), np.full(25, 0.5))
    assert not sol.feasible and np.all(np.isnan(sol.x_star))


def test_ccopf_level_domain(sys14):
    with pytest.raises(DomainError):
        solve_ccopf(sys14.model, np.full(25, 0.4))
    with pytest.raises(DomainError):
        solve_ccopf(sys14.model, np.full(24, 0.9))


def test_ccopf_monotone_along_profile(sys14):
    bmax = sys14.result.beta_max
    costs = []
    for b in np.linspace(0.0, bmax, 4):
        sol = solve_ccopf(sys14.model, beta_levels(sys14.profile.at(b)))
        assert sol.feasible
        costs.append(sol.cost)
    assert np.all(np.diff(costs) >= -1e-6)


def test_verify_boundary_toy():
    res = solve_inverse(TOY, TOY_PROFILE)
    check = verify_boundary(TOY, TOY_PROFILE, res.beta_max, 1e-6)
    assert check.below_feasible and check.above_infeasible and check.certified


def test_verify_boundary_rejects_zero_delta():
    with pytest.raises(DomainError):
        verify_boundary(TOY, TOY_PROFILE, 0.3, 0.0)
