"""Reference computations that share no code with the package under test."""

import math

import mpmath
import numpy as np

mpmath.mp.dps = 40


def cdf(x):
    return float(mpmath.ncdf(x))


def icdf(p):
    """Normal quantile by bisection on the high-precision CDF."""
    lo, hi = mpmath.mpf(-40), mpmath.mpf(40)
    p = mpmath.mpf(p)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mpmath.ncdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def ptdf_by_angles(n_bus, lines, ref):
    """PTDF from the full Laplacian with a pinned reference angle (least squares).

    ``lines`` lists ``(f, t, b)`` with zero-based bus indices.
    """
    B = np.zeros((n_bus, n_bus))
    for f, t, b in lines:
        B[f, f] += b
        B[t, t] += b
        B[f, t] -= b
        B[t, f] -= b
    pin = np.zeros((1, n_bus))
    pin[0, ref] = 1.0
    M = np.vstack([B, pin])
    out = np.zeros((len(lines), n_bus))
    for j in range(n_bus):
        inj = np.zeros(n_bus)
        inj[j] += 1.0
        inj[ref] -= 1.0
        theta = np.linalg.lstsq(M, np.concatenate([inj, [0.0]]), rcond=None)[0]
        out[:, j] = [b * (theta[f] - theta[t]) for f, t, b in lines]
    return out


def bisect_beta_max(snorm, lo, hi, eps_s=1e-6, width=1e-7):
    """Largest beta in [lo, hi] with snorm(beta) <= eps_s, assuming a single crossing."""
    assert snorm(lo) <= eps_s < snorm(hi)
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if snorm(mid) <= eps_s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def toy_beta_max(d, wx0, nu0):
    """Boundary level of a single row ``wx0 + Phi^-1(beta) * nu0 <= d`` at a pinned point."""
    return float(mpmath.ncdf((d - wx0) / nu0))


def socp_clarabel(program):
    """Optimal value from an independent solver, or None when unavailable."""
    try:
        import cvxpy as cp
    except ImportError:  # pragma: no cover
        return None
    z = cp.Variable(program.n)
    cons = []
    if program.A.shape[0]:
        cons.append(program.A @ z == program.b)
    if program.G_lin.shape[0]:
        cons.append(program.G_lin @ z <= program.h_lin)
    for blk in program.socs:
        cons.append(cp.SOC(blk.a @ z + blk.b0, blk.F @ z + blk.g))
    prob = cp.Problem(cp.Minimize(program.c @ z), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value if prob.status == "optimal" else math.nan
