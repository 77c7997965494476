# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stepping kernels.

Element-by-element port of kernels_py.py with identical expression trees,
compiled with floating-point contraction disabled so both backends round the
same way. See kernels_py.py for semantics; this module only restates what
differs (loop structure and scalar math calls).
"""

import numpy as np

from libc.math cimport exp, sqrt

CLAMP_TOL = 1e-10
cdef double _TOL = 1e-10

EULER = 0
MILSTEIN = 1
HEUN = 2
BAYES = 3


cdef inline int _clamp1(double* r) noexcept nogil:
    if r[0] < 0.0:
        if r[0] < -_TOL:
            return 1
        r[0] = 0.0
    elif r[0] > 1.0:
        if r[0] > 1.0 + _TOL:
            return 1
        r[0] = 1.0
    return 0


cdef int _advance_row(int code, double[::1] r, double[::1] cre, double[::1] cim,
                      double gamma, double dt, double[::1] dwrow) noexcept nogil:
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double sq = sqrt(gamma)
    cdef double a = 2.0 * gamma * dt
    cdef double e = 2.0 * sq * dt
    cdef double z, dw, dn, f, rs, q
    cdef double a0, b0, g0, h0, rp, fp, zp, rsp, ap, bp, gp, hp, fc
    cdef double x, lam, el, eli, nn
    if code == 0:
        for i in range(n):
            dw = dwrow[i]
            z = 2.0 * r[i] - 1.0
            dn = 2.0 * sq * dw
            r[i] = r[i] + (1.0 - z) * r[i] * dn
            f = 1.0 - a - z * dn
            cre[i] = cre[i] * f
            cim[i] = cim[i] * f
            if _clamp1(&r[i]):
                return 1
    elif code == 1:
        for i in range(n):
            dw = dwrow[i]
            z = 2.0 * r[i] - 1.0
            dn = 2.0 * sq * dw
            rs = r[i] * (1.0 - r[i])
            q = dw * dw - dt
            r[i] = r[i] + 4.0 * sq * rs * dw - 8.0 * gamma * rs * z * q
            f = 1.0 - a - z * dn + 2.0 * gamma * (2.0 * z * z - 1.0) * q
            cre[i] = cre[i] * f
            cim[i] = cim[i] * f
            if _clamp1(&r[i]):
                return 1
    elif code == 2:
        for i in range(n):
            dw = dwrow[i]
            z = 2.0 * r[i] - 1.0
            rs = r[i] * (1.0 - r[i])
            a0 = 8.0 * gamma * z * rs
            b0 = 4.0 * sq * rs
            g0 = -4.0 * gamma * z * z
            h0 = -2.0 * sq * z
            rp = r[i] + a0 * dt + b0 * dw
            fp = 1.0 + g0 * dt + h0 * dw
            zp = 2.0 * rp - 1.0
            rsp = rp * (1.0 - rp)
            ap = 8.0 * gamma * zp * rsp
            bp = 4.0 * sq * rsp
            gp = -4.0 * gamma * zp * zp
            hp = -2.0 * sq * zp
            r[i] = r[i] + 0.5 * ((a0 + ap) * dt + (b0 + bp) * dw)
            fc = 1.0 + 0.5 * ((g0 + gp * fp) * dt + (h0 + hp * fp) * dw)
            cre[i] = cre[i] * fc
            cim[i] = cim[i] * fc
            if _clamp1(&r[i]):
                return 1
    elif code == 3:
        for i in range(n):
            dw = dwrow[i]
            z = 2.0 * r[i] - 1.0
            x = e * z + dw
            lam = 2.0 * sq * x
            el = exp(lam)
            eli = 1.0 / el
            nn = r[i] * el + (1.0 - r[i]) * eli
            f = 1.0 / nn
            r[i] = r[i] * el / nn
            cre[i] = cre[i] * f
            cim[i] = cim[i] * f
            if _clamp1(&r[i]):
                return 1
    else:
        return 2
    return 0


def evolve_generic(int code, double[::1] r, double[::1] cre, double[::1] cim,
                   double gamma, double dt, double[:, ::1] normals, x_out=None):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double e = 2.0 * sqrt(gamma) * dt
    cdef double[::1] xv
    cdef double[::1] dwrow = np.empty(n)
    cdef int status
    cdef bint want_x = x_out is not None
    if want_x:
        xv = x_out
    for k in range(steps):
        for i in range(n):
            dwrow[i] = normals[k, i] * sqdt
        if want_x:
            for i in range(n):
                xv[i] += e * (2.0 * r[i] - 1.0) + dwrow[i]
        status = _advance_row(code, r, cre, cim, gamma, dt, dwrow)
        if status:
            if status == 2:
                raise ValueError(f"unknown stepper code {code!r}")
            return 1
    return 0


def mc_generic(int code, double[::1] r, double[::1] cre, double[::1] cim,
               double gamma, double dt, double[:, ::1] normals,
               double[:, ::1] uniforms, double[::1] x_out):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double e = 2.0 * sqrt(gamma) * dt
    cdef double[::1] dwrow = np.empty(n)
    cdef double z, sign, x
    cdef int status
    for k in range(steps):
        for i in range(n):
            z = 2.0 * r[i] - 1.0
            sign = 1.0 if uniforms[k, i] < r[i] else -1.0
            x = e * sign + sqdt * normals[k, i]
            dwrow[i] = x - e * z
            x_out[i] += x
        status = _advance_row(code, r, cre, cim, gamma, dt, dwrow)
        if status:
            if status == 2:
                raise ValueError(f"unknown stepper code {code!r}")
            return 1
    return 0


def evolve_generic_traced(int code, double[::1] r, double[::1] cre, double[::1] cim,
                          double gamma, double dt, double[:, ::1] normals,
                          double[::1] sum_r, double[::1] sum_cre, double[::1] sum_cim):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double[::1] dwrow = np.empty(n)
    cdef double tr, tcre, tcim
    cdef int status
    for k in range(steps):
        for i in range(n):
            dwrow[i] = normals[k, i] * sqdt
        status = _advance_row(code, r, cre, cim, gamma, dt, dwrow)
        if status:
            if status == 2:
                raise ValueError(f"unknown stepper code {code!r}")
            return 1
        tr = 0.0
        tcre = 0.0
        tcim = 0.0
        for i in range(n):
            tr += r[i]
            tcre += cre[i]
            tcim += cim[i]
        sum_r[k] += tr
        sum_cre[k] += tcre
        sum_cim[k] += tcim
    return 0


cdef int _advance_cqed_row(double[::1] r, double[::1] cre, double[::1] cim,
                           double s_ci, double s_ba, double g_d, double omega,
                           double dt, double[::1] dwrow) noexcept nogil:
    cdef Py_ssize_t i, n = r.shape[0]
    cdef double z, dw, cre_n, cim_n
    for i in range(n):
        dw = dwrow[i]
        z = 2.0 * r[i] - 1.0
        cre_n = cre[i] + (omega * cim[i] - g_d * cre[i]) * dt + (s_ci * z * cre[i] - s_ba * cim[i]) * dw
        cim_n = cim[i] + (-omega * cre[i] - g_d * cim[i]) * dt + (s_ci * z * cim[i] + s_ba * cre[i]) * dw
        r[i] = r[i] - s_ci * (1.0 - z) * r[i] * dw
        cre[i] = cre_n
        cim[i] = cim_n
        if _clamp1(&r[i]):
            return 1
    return 0


def evolve_cqed(double[::1] r, double[::1] cre, double[::1] cim,
                double g_ci, double g_ba, double g_d, double omega,
                double dt, double[:, ::1] normals, x_out=None):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double s_ci = sqrt(g_ci)
    cdef double s_ba = sqrt(g_ba)
    cdef double m = s_ci * dt
    cdef double[::1] xv
    cdef double[::1] dwrow = np.empty(n)
    cdef bint want_x = x_out is not None
    if want_x:
        xv = x_out
    for k in range(steps):
        for i in range(n):
            dwrow[i] = normals[k, i] * sqdt
        if want_x:
            for i in range(n):
                xv[i] += dwrow[i] - m * (2.0 * r[i] - 1.0)
        if _advance_cqed_row(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dwrow):
            return 1
    return 0


def mc_cqed(double[::1] r, double[::1] cre, double[::1] cim,
            double g_ci, double g_ba, double g_d, double omega,
            double dt, double[:, ::1] normals, double[:, ::1] uniforms,
            double[::1] x_out):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double s_ci = sqrt(g_ci)
    cdef double s_ba = sqrt(g_ba)
    cdef double m = s_ci * dt
    cdef double[::1] dwrow = np.empty(n)
    cdef double z, sign, x
    for k in range(steps):
        for i in range(n):
            z = 2.0 * r[i] - 1.0
            sign = -1.0 if uniforms[k, i] < r[i] else 1.0
            x = m * sign + sqdt * normals[k, i]
            dwrow[i] = x + m * z
            x_out[i] += x
        if _advance_cqed_row(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dwrow):
            return 1
    return 0


def evolve_cqed_traced(double[::1] r, double[::1] cre, double[::1] cim,
                       double g_ci, double g_ba, double g_d, double omega,
                       double dt, double[:, ::1] normals,
                       double[::1] sum_r, double[::1] sum_cre, double[::1] sum_cim):
    cdef Py_ssize_t k, i, steps = normals.shape[0], n = r.shape[0]
    cdef double sqdt = sqrt(dt)
    cdef double s_ci = sqrt(g_ci)
    cdef double s_ba = sqrt(g_ba)
    cdef double[::1] dwrow = np.empty(n)
    cdef double tr, tcre, tcim
    for k in range(steps):
        for i in range(n):
            dwrow[i] = normals[k, i] * sqdt
        if _advance_cqed_row(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dwrow):
            return 1
        tr = 0.0
        tcre = 0.0
        tcim = 0.0
        for i in range(n):
            tr += r[i]
            tcre += cre[i]
            tcim += cim[i]
        sum_r[k] += tr
        sum_cre[k] += tcre
        sum_cim[k] += tcim
    return 0
