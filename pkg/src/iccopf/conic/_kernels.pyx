# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cone kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline double _jnorm(const double[:] x, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double n1 = 0.0, r
    cdef Py_ssize_t j
    for j in range(a + 1, b):
        n1 += x[j] * x[j]
    n1 = sqrt(n1)
    r = (x[a] - n1) * (x[a] + n1)
    if r < 0.0:
        r = 0.0
    return sqrt(r)


def _as_sizes(q):
    return np.ascontiguousarray(q, dtype=np.intp)


def identity(Py_ssize_t l, q):
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    cdef Py_ssize_t i, start = l, total = l
    for i in range(qs.shape[0]):
        total += qs[i]
    e = np.zeros(total)
    cdef double[:] ev = e
    for i in range(l):
        ev[i] = 1.0
    for i in range(qs.shape[0]):
        ev[start] = 1.0
        start += qs[i]
    return e


def nt_scaling(s_in, z_in, Py_ssize_t l, q):
    cdef double[:] s = np.ascontiguousarray(s_in, dtype=float)
    cdef double[:] z = np.ascontiguousarray(z_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    cdef Py_ssize_t m = s.shape[0], nq = qs.shape[0]
    d_arr = np.empty(l)
    beta_arr = np.empty(nq)
    v_arr = np.empty(m - l)
    lam_arr = np.empty(m)
    cdef double[:] d = d_arr
    cdef double[:] beta = beta_arr
    cdef double[:] v = v_arr
    cdef double[:] lam = lam_arr
    cdef Py_ssize_t i, j, a, b
    cdef double sn, zn, dot, gamma, wz, bt
    with nogil:
        for i in range(l):
            d[i] = sqrt(s[i] / z[i])
            lam[i] = sqrt(s[i] * z[i])
        a = l
        for i in range(nq):
            b = a + qs[i]
            sn = _jnorm(s, a, b)
            zn = _jnorm(z, a, b)
            dot = 0.0
            for j in range(a, b):
                dot += (s[j] / sn) * (z[j] / zn)
            gamma = sqrt(0.5 * (1.0 + dot))
            v[a - l] = (s[a] / sn + z[a] / zn) / (2.0 * gamma)
            for j in range(a + 1, b):
                v[j - l] = (s[j] / sn - z[j] / zn) / (2.0 * gamma)
            v[a - l] += 1.0
            wz = sqrt(2.0 * v[a - l])
            for j in range(a, b):
                v[j - l] /= wz
            bt = sqrt(sn / zn)
            beta[i] = bt
            wz = 0.0
            for j in range(a, b):
                wz += v[j - l] * z[j]
            lam[a] = bt * (2.0 * wz * v[a - l] - z[a])
            for j in range(a + 1, b):
                lam[j] = bt * (2.0 * wz * v[j - l] + z[j])
            a = b
    return d_arr, beta_arr, v_arr, lam_arr


def scale(x_in, d_in, beta_in, v_in, Py_ssize_t l, q, bint inverse=False):
    arr = np.asarray(x_in, dtype=float)
    cdef bint vec = arr.ndim == 1
    cdef double[:, :] x = np.ascontiguousarray(arr.reshape(arr.shape[0], 1 if vec else arr.shape[1]))
    cdef double[:] d = np.ascontiguousarray(d_in, dtype=float)
    cdef double[:] beta = np.ascontiguousarray(beta_in, dtype=float)
    cdef double[:] v = np.ascontiguousarray(v_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    cdef Py_ssize_t ncol = x.shape[1], nq = qs.shape[0]
    out_arr = np.empty((x.shape[0], ncol))
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t i, j, c, a, b
    cdef double coef, sgn, proj, w0
    with nogil:
        for i in range(l):
            for c in range(ncol):
                if inverse:
                    out[i, c] = x[i, c] / d[i]
                else:
                    out[i, c] = x[i, c] * d[i]
        a = l
        for i in range(nq):
            b = a + qs[i]
            if inverse:
                coef = 1.0 / beta[i]
                sgn = -1.0
            else:
                coef = beta[i]
                sgn = 1.0
            w0 = v[a - l]
            for c in range(ncol):
                proj = w0 * x[a, c]
                for j in range(a + 1, b):
                    proj += sgn * v[j - l] * x[j, c]
                out[a, c] = coef * (2.0 * proj * w0 - x[a, c])
                for j in range(a + 1, b):
                    out[j, c] = coef * (2.0 * proj * sgn * v[j - l] + x[j, c])
            a = b
    if vec:
        return out_arr[:, 0].copy()
    return out_arr


def jprod(u_in, w_in, Py_ssize_t l, q):
    cdef double[:] u = np.ascontiguousarray(u_in, dtype=float)
    cdef double[:] w = np.ascontiguousarray(w_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    out_arr = np.empty(u.shape[0])
    cdef double[:] out = out_arr
    cdef Py_ssize_t i, j, a, b
    cdef double acc
    with nogil:
        for i in range(l):
            out[i] = u[i] * w[i]
        a = l
        for i in range(qs.shape[0]):
            b = a + qs[i]
            acc = 0.0
            for j in range(a, b):
                acc += u[j] * w[j]
            out[a] = acc
            for j in range(a + 1, b):
                out[j] = u[a] * w[j] + w[a] * u[j]
            a = b
    return out_arr


def jdiv(lam_in, w_in, Py_ssize_t l, q):
    cdef double[:] lam = np.ascontiguousarray(lam_in, dtype=float)
    cdef double[:] w = np.ascontiguousarray(w_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    out_arr = np.empty(w.shape[0])
    cdef double[:] out = out_arr
    cdef Py_ssize_t i, j, a, b
    cdef double l0, det, lw, x0
    with nogil:
        for i in range(l):
            out[i] = w[i] / lam[i]
        a = l
        for i in range(qs.shape[0]):
            b = a + qs[i]
            l0 = lam[a]
            det = l0 * l0
            lw = 0.0
            for j in range(a + 1, b):
                det -= lam[j] * lam[j]
                lw += lam[j] * w[j]
            x0 = (l0 * w[a] - lw) / det
            out[a] = x0
            for j in range(a + 1, b):
                out[j] = (w[j] - x0 * lam[j]) / l0
            a = b
    return out_arr


def max_step(lam_in, dx_in, Py_ssize_t l, q):
    cdef double[:] lam = np.ascontiguousarray(lam_in, dtype=float)
    cdef double[:] dx = np.ascontiguousarray(dx_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    cdef Py_ssize_t i, j, a, b
    cdef double t = 0.0, ln, rho0, c, nr, r, lb0
    with nogil:
        for i in range(l):
            r = -dx[i] / lam[i]
            if r > t:
                t = r
        a = l
        for i in range(qs.shape[0]):
            b = a + qs[i]
            ln = _jnorm(lam, a, b)
            lb0 = lam[a] / ln
            rho0 = lb0 * dx[a]
            for j in range(a + 1, b):
                rho0 -= (lam[j] / ln) * dx[j]
            rho0 /= ln
            c = (rho0 + dx[a] / ln) / (lb0 + 1.0)
            nr = 0.0
            for j in range(a + 1, b):
                r = dx[j] / ln - c * (lam[j] / ln)
                nr += r * r
            r = sqrt(nr) - rho0
            if r > t:
                t = r
            a = b
    return t


def boundary_offset(x_in, Py_ssize_t l, q):
    cdef double[:] x = np.ascontiguousarray(x_in, dtype=float)
    cdef Py_ssize_t[:] qs = _as_sizes(q)
    cdef Py_ssize_t i, j, a, b
    cdef double t = -INFINITY, nr, r
    with nogil:
        for i in range(l):
            if -x[i] > t:
                t = -x[i]
        a = l
        for i in range(qs.shape[0]):
            b = a + qs[i]
            nr = 0.0
            for j in range(a + 1, b):
                nr += x[j] * x[j]
            r = sqrt(nr) - x[a]
            if r > t:
                t = r
            a = b
    return t
