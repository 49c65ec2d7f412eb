# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: one-sided Jacobi rotations and the per-entry SVD
Jacobian contraction. Mirrors ``_pykernels`` exactly; see that module for the
math."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

DEF MAX_SWEEPS = 80


def jacobi_rotate(const double[:, :] a, double tol):
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1]
    cdef Py_ssize_t p, q, r, sweep
    cdef double alpha, beta, gamma, zeta, t, c, s, xp, xq
    cdef bint rotated

    w_arr = np.array(a, dtype=np.float64, order="C", copy=True)
    v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] w = w_arr
    cdef double[:, ::1] v = v_arr

    for sweep in range(MAX_SWEEPS):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for r in range(m):
                    alpha += w[r, p] * w[r, p]
                    beta += w[r, q] * w[r, q]
                    gamma += w[r, p] * w[r, q]
                if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for r in range(m):
                    xp = w[r, p]
                    xq = w[r, q]
                    w[r, p] = c * xp - s * xq
                    w[r, q] = s * xp + c * xq
                for r in range(n):
                    xp = v[r, p]
                    xq = v[r, q]
                    v[r, p] = c * xp - s * xq
                    v[r, q] = s * xp + c * xq
        if not rotated:
            break
    return w_arr, v_arr


def jacobi_svd(const double[:, :] a, double tol, double zero_tol):
    """Sorted, sign-fixed thin SVD; columns of u for singular values at or
    below ``zero_tol * d_max`` are left as zeros for the caller to complete."""
    cdef Py_ssize_t m = a.shape[0], n = a.shape[1]
    cdef Py_ssize_t i, j, r, best
    cdef double nrm, big, sgn
    w_arr, v_arr = jacobi_rotate(a, tol)
    cdef double[:, ::1] w = w_arr
    cdef double[:, ::1] v = v_arr

    d_raw = np.empty(n)
    cdef double[::1] dr = d_raw
    for j in range(n):
        nrm = 0.0
        for r in range(m):
            nrm += w[r, j] * w[r, j]
        dr[j] = sqrt(nrm)
    order = np.argsort(-d_raw, kind="stable")
    cdef Py_ssize_t[::1] perm = order.astype(np.intp)

    u_arr = np.zeros((m, n))
    vo_arr = np.empty((n, n))
    d_arr = np.empty(n)
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] vo = vo_arr
    cdef double[::1] d = d_arr
    cdef double dmax = dr[perm[0]]
    for j in range(n):
        i = perm[j]
        d[j] = dr[i]
        for r in range(n):
            vo[r, j] = v[r, i]
        if d[j] <= zero_tol * dmax or d[j] == 0.0:
            d[j] = 0.0
            continue
        best = 0
        big = -1.0
        for r in range(m):
            u[r, j] = w[r, i] / d[j]
            if fabs(u[r, j]) > big:
                big = fabs(u[r, j])
                best = r
        sgn = 1.0 if u[best, j] >= 0.0 else -1.0
        if sgn < 0.0:
            for r in range(m):
                u[r, j] = -u[r, j]
            for r in range(n):
                vo[r, j] = -vo[r, j]
    return u_arr, d_arr, vo_arr


def svd_grad_contract(const double[:, :] u, const double[:] d,
                      const double[:, :] v, const double[:, :] w,
                      const double[:, :] r):
    cdef Py_ssize_t m = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t i, j, k, l
    cdef double acc, det, rhs1, rhs2, omega_u

    out_arr = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                for k in range(n):
                    if k == l:
                        continue
                    det = d[l] * d[l] - d[k] * d[k]
                    rhs1 = u[i, k] * v[j, l]
                    rhs2 = -u[i, l] * v[j, k]
                    omega_u = (rhs1 * d[l] - d[k] * rhs2) / det
                    acc += w[k, l] * omega_u
                acc += r[i, l] * v[j, l] / d[l]
            out[i, j] = acc
    return out_arr
