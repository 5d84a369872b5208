# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 delay-integration kernel; mirrors ``_kernels_py.integrate``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, floor, isfinite

cnp.import_array()


cdef inline double _hermite(double[:, ::1] Z, Py_ssize_t ia, double s, double h, double x_init) noexcept nogil:
    cdef Py_ssize_t j
    cdef double th, th2, th3
    if s <= 0.0:
        return x_init
    j = <Py_ssize_t> floor(s / h)
    th = s / h - j
    if th == 0.0:
        return Z[j, ia]
    th2 = th * th
    th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * Z[j, ia] + (th3 - 2 * th2 + th) * h * Z[j, ia + 1]
            + (-2 * th3 + 3 * th2) * Z[j + 1, ia] + (th3 - th2) * h * Z[j + 1, ia + 1])


cdef inline void _rhs(const double* Ap, const double* Aa, const double* a1, const double* b,
                      double amp, double omega, double switch_time, bint use_delay,
                      double t, const double* z, double xd, double* out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc, f = amp * cos(omega * t)
    cdef bint active = t >= switch_time
    cdef const double* A = Aa if active else Ap
    for i in range(n):
        acc = b[i] * f
        for j in range(n):
            acc += A[i * n + j] * z[j]
        if active and use_delay:
            acc += a1[i] * xd
        out[i] = acc


def integrate(A_pass, A_act, a1, b, Py_ssize_t ia, double amp, double omega, double tau,
              double dt, Py_ssize_t nsteps, double switch_time, z0):
    cdef double[:, ::1] Ap = np.ascontiguousarray(A_pass, dtype=np.float64)
    cdef double[:, ::1] Aa = np.ascontiguousarray(A_act, dtype=np.float64)
    cdef double[::1] va1 = np.ascontiguousarray(a1, dtype=np.float64)
    cdef double[::1] vb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = Ap.shape[0]
    Z_arr = np.empty((nsteps + 1, n))
    xdel_arr = np.zeros(nsteps + 1)
    cdef double[:, ::1] Z = Z_arr
    cdef double[::1] xdel = xdel_arr
    cdef double[::1] vz0 = np.ascontiguousarray(z0, dtype=np.float64)
    work_arr = np.zeros((6, n))
    cdef double[:, ::1] w = work_arr
    cdef double* z = &w[0, 0]
    cdef double* k1 = &w[1, 0]
    cdef double* k2 = &w[2, 0]
    cdef double* k3 = &w[3, 0]
    cdef double* k4 = &w[4, 0]
    cdef double* tmp = &w[5, 0]
    cdef Py_ssize_t i, k
    cdef double t, h = dt, d0 = 0.0, dm = 0.0, d1 = 0.0
    cdef double x_init = vz0[ia]
    cdef bint use_delay = tau > 0.0 and np.any(np.asarray(a1))
    cdef Py_ssize_t bad = -1

    for i in range(n):
        z[i] = vz0[i]
        Z[0, i] = vz0[i]
    with nogil:
        for k in range(nsteps):
            t = k * h
            if use_delay:
                d0 = _hermite(Z, ia, t - tau, h, x_init)
                dm = _hermite(Z, ia, t + 0.5 * h - tau, h, x_init)
                d1 = _hermite(Z, ia, t + h - tau, h, x_init)
                xdel[k] = d0
            _rhs(&Ap[0, 0], &Aa[0, 0], &va1[0], &vb[0], amp, omega, switch_time, use_delay, t, z, d0, k1, n)
            for i in range(n):
                tmp[i] = z[i] + 0.5 * h * k1[i]
            _rhs(&Ap[0, 0], &Aa[0, 0], &va1[0], &vb[0], amp, omega, switch_time, use_delay, t + 0.5 * h, tmp, dm, k2, n)
            for i in range(n):
                tmp[i] = z[i] + 0.5 * h * k2[i]
            _rhs(&Ap[0, 0], &Aa[0, 0], &va1[0], &vb[0], amp, omega, switch_time, use_delay, t + 0.5 * h, tmp, dm, k3, n)
            for i in range(n):
                tmp[i] = z[i] + h * k3[i]
            _rhs(&Ap[0, 0], &Aa[0, 0], &va1[0], &vb[0], amp, omega, switch_time, use_delay, t + h, tmp, d1, k4, n)
            for i in range(n):
                z[i] = z[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(z[i]):
                    bad = k + 1
                Z[k + 1, i] = z[i]
            if bad >= 0:
                break
    if bad >= 0:
        raise FloatingPointError(bad)
    if use_delay:
        xdel[nsteps] = _hermite(Z, ia, nsteps * h - tau, h, x_init)
    return Z_arr, xdel_arr
