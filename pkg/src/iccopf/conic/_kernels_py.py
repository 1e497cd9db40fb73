"""Pure NumPy cone kernels.

Vectors are laid out as ``l`` nonnegative-orthant entries followed by the
second-order cones whose sizes are listed in ``q``. Every function here has a
compiled twin in ``_kernels.pyx`` with the same signature.
"""

import numpy as np

BACKEND = "python"


def _soc_slices(l, q):
    start = l
    for size in q:
        yield start, start + size
        start += size


def _jnorm(x):
    # sqrt(x0^2 - |x1|^2), factored for accuracy near the boundary
    n1 = np.linalg.norm(x[1:])
    return np.sqrt(max((x[0] - n1) * (x[0] + n1), 0.0))


def identity(l, q):
    e = np.zeros(l + int(sum(q)))
    e[:l] = 1.0
    for a, _ in _soc_slices(l, q):
        e[a] = 1.0
    return e


def nt_scaling(s, z, l, q):
    """Nesterov-Todd scaling point for interior ``s`` and ``z``.

    Returns ``(d, beta, v, lam)``: the orthant diagonal, per-cone scale
    factors, the stacked unit-determinant vectors ``v`` with
    ``W = beta * (2 v v' - J)`` (laid out like the cone part of ``s``) and the
    scaled point ``lam = W z = W^{-1} s``.
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    m = s.shape[0]
    d = np.sqrt(s[:l] / z[:l])
    beta = np.empty(len(q))
    v = np.empty(m - l)
    lam = np.empty(m)
    lam[:l] = np.sqrt(s[:l] * z[:l])
    for i, (a, b) in enumerate(_soc_slices(l, q)):
        sn = _jnorm(s[a:b])
        zn = _jnorm(z[a:b])
        sb = s[a:b] / sn
        zb = z[a:b] / zn
        gamma = np.sqrt(0.5 * (1.0 + sb @ zb))
        w = np.empty(b - a)
        w[0] = (sb[0] + zb[0]) / (2.0 * gamma)
        w[1:] = (sb[1:] - zb[1:]) / (2.0 * gamma)
        # square root of the scaling point: W = beta * (2 w w' - J)
        w[0] += 1.0
        w /= np.sqrt(2.0 * w[0])
        beta[i] = np.sqrt(sn / zn)
        v[a - l:b - l] = w
        # W z = beta * (2 w (w' z) - J z)
        wz = w @ z[a:b]
        out = 2.0 * wz * w
        out[0] -= z[a]
        out[1:] += z[a + 1:b]
        lam[a:b] = beta[i] * out
    return d, beta, v, lam


def scale(x, d, beta, v, l, q, inverse=False):
    """Apply ``W`` (or ``W^{-1}``) to a vector or to the rows of a matrix."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    if inverse:
        out[:l] = x[:l] / d[:, None] if x.ndim == 2 else x[:l] / d
    else:
        out[:l] = x[:l] * d[:, None] if x.ndim == 2 else x[:l] * d
    for i, (a, b) in enumerate(_soc_slices(l, q)):
        w = v[a - l:b - l].copy()
        blk = x[a:b]
        if inverse:
            # W^{-1} = (2 Jw (Jw)' - J) / beta
            w[1:] = -w[1:]
            coef = 1.0 / beta[i]
        else:
            coef = beta[i]
        proj = w @ blk
        res = 2.0 * np.multiply.outer(w, proj)
        res[0] -= blk[0]
        res[1:] += blk[1:]
        out[a:b] = coef * res
    return out


def jprod(u, w, l, q):
    out = np.empty_like(u)
    out[:l] = u[:l] * w[:l]
    for a, b in _soc_slices(l, q):
        out[a] = u[a:b] @ w[a:b]
        out[a + 1:b] = u[a] * w[a + 1:b] + w[a] * u[a + 1:b]
    return out


def jdiv(lam, w, l, q):
    """Solve ``lam o x = w`` for x."""
    out = np.empty_like(w)
    out[:l] = w[:l] / lam[:l]
    for a, b in _soc_slices(l, q):
        l0 = lam[a]
        l1 = lam[a + 1:b]
        det = l0 * l0 - l1 @ l1
        x0 = (l0 * w[a] - l1 @ w[a + 1:b]) / det
        out[a] = x0
        out[a + 1:b] = (w[a + 1:b] - x0 * l1) / l0
    return out


def max_step(lam, dx, l, q):
    """Return t >= 0 such that lam + alpha*dx stays in the cone for alpha < 1/t."""
    t = 0.0
    if l:
        t = max(t, float(np.max(-dx[:l] / lam[:l])))
    for a, b in _soc_slices(l, q):
        ln = _jnorm(lam[a:b])
        lb = lam[a:b] / ln
        rho0 = (lb[0] * dx[a] - lb[1:] @ dx[a + 1:b]) / ln
        rho1 = dx[a + 1:b] / ln - (rho0 + dx[a] / ln) / (lb[0] + 1.0) * lb[1:]
        t = max(t, float(np.linalg.norm(rho1)) - rho0)
    return t


def boundary_offset(x, l, q):
    """Smallest t such that x + t*e lies in the cone (negative if interior)."""
    t = -np.inf
    if l:
        t = float(np.max(-x[:l]))
    for a, b in _soc_slices(l, q):
        t = max(t, float(np.linalg.norm(x[a + 1:b])) - x[a])
    return t
