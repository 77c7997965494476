"""Vectorized stepping kernels (pure numpy backend).

Each kernel advances a flat batch of qubit states through a panel of
pre-drawn randoms, step-outer so the whole batch moves one step at a time.
The compiled backend in _stepping.pyx implements the same expression trees
element by element (and is built with contraction disabled), so the two
backends agree to rounding.

State layout: rho11, Re(rho12), Im(rho12) as float64 arrays of shape (n,).
Randoms: standard normals (and uniforms for record sampling) of shape
(steps, n). Records accumulate into x_out when given.

Kernels return 0 on success and 1 when a population leaves [0, 1] by more
than the clamp tolerance (callers raise); violations within tolerance are
clamped to the boundary, matching the scalar-state policy.

Stepper codes: 0 Euler (Ito), 1 Milstein (Ito), 2 Heun (Stratonovich),
3 exact Bayes map per step.
"""

from __future__ import annotations

import math

import numpy as np

CLAMP_TOL = 1e-10

EULER = 0
MILSTEIN = 1
HEUN = 2
BAYES = 3


def _clamp(r: np.ndarray) -> int:
    if np.any(r < -CLAMP_TOL) or np.any(r > 1.0 + CLAMP_TOL):
        return 1
    np.clip(r, 0.0, 1.0, out=r)
    return 0


def _advance(code, r, cre, cim, gamma, dt, dw, z):
    """One step of the selected scheme given increments dw and z = 2 rho11 - 1."""
    sq = math.sqrt(gamma)
    a = 2.0 * gamma * dt
    if code == EULER:
        dn = 2.0 * sq * dw
        r[:] = r + (1.0 - z) * r * dn
        f = 1.0 - a - z * dn
        cre[:] = cre * f
        cim[:] = cim * f
    elif code == MILSTEIN:
        dn = 2.0 * sq * dw
        rs = r * (1.0 - r)
        q = dw * dw - dt
        r[:] = r + 4.0 * sq * rs * dw - 8.0 * gamma * rs * z * q
        f = 1.0 - a - z * dn + 2.0 * gamma * (2.0 * z * z - 1.0) * q
        cre[:] = cre * f
        cim[:] = cim * f
    elif code == HEUN:
        rs = r * (1.0 - r)
        a0 = 8.0 * gamma * z * rs
        b0 = 4.0 * sq * rs
        g0 = -4.0 * gamma * z * z
        h0 = -2.0 * sq * z
        rp = r + a0 * dt + b0 * dw
        fp = 1.0 + g0 * dt + h0 * dw
        zp = 2.0 * rp - 1.0
        rsp = rp * (1.0 - rp)
        ap = 8.0 * gamma * zp * rsp
        bp = 4.0 * sq * rsp
        gp = -4.0 * gamma * zp * zp
        hp = -2.0 * sq * zp
        r[:] = r + 0.5 * ((a0 + ap) * dt + (b0 + bp) * dw)
        fc = 1.0 + 0.5 * ((g0 + gp * fp) * dt + (h0 + hp * fp) * dw)
        cre[:] = cre * fc
        cim[:] = cim * fc
    elif code == BAYES:
        e = 2.0 * sq * dt
        x = e * z + dw
        lam = 2.0 * sq * x
        el = np.exp(lam)
        eli = 1.0 / el
        nn = r * el + (1.0 - r) * eli
        r[:] = r * el / nn
        f = 1.0 / nn
        cre[:] = cre * f
        cim[:] = cim * f
    else:
        raise ValueError(f"unknown stepper code {code!r}")


def evolve_generic(code, r, cre, cim, gamma, dt, normals, x_out=None) -> int:
    """Advance a batch along given noise; optionally accumulate records."""
    sqdt = math.sqrt(dt)
    e = 2.0 * math.sqrt(gamma) * dt
    for k in range(normals.shape[0]):
        dw = normals[k] * sqdt
        z = 2.0 * r - 1.0
        if x_out is not None:
            x_out += e * z + dw
        _advance(code, r, cre, cim, gamma, dt, dw, z)
        if _clamp(r):
            return 1
    return 0


def mc_generic(code, r, cre, cim, gamma, dt, normals, uniforms, x_out) -> int:
    """Advance a batch sampling each record from the state-weighted mixture.

    Per step: the outcome branch is chosen with probability rho11 (uniform
    draw), x = +-eps + sqrt(dt) * normal, and the innovation dw = x - eps*z
    drives the stepper. Exact record statistics for any scheme.
    """
    sqdt = math.sqrt(dt)
    e = 2.0 * math.sqrt(gamma) * dt
    for k in range(normals.shape[0]):
        z = 2.0 * r - 1.0
        sign = np.where(uniforms[k] < r, 1.0, -1.0)
        x = e * sign + sqdt * normals[k]
        dw = x - e * z
        x_out += x
        _advance(code, r, cre, cim, gamma, dt, dw, z)
        if _clamp(r):
            return 1
    return 0


def evolve_generic_traced(code, r, cre, cim, gamma, dt, normals, sum_r, sum_cre, sum_cim) -> int:
    """Like evolve_generic but accumulates per-step batch sums after each step."""
    sqdt = math.sqrt(dt)
    for k in range(normals.shape[0]):
        dw = normals[k] * sqdt
        z = 2.0 * r - 1.0
        _advance(code, r, cre, cim, gamma, dt, dw, z)
        if _clamp(r):
            return 1
        sum_r[k] += np.add.reduce(r)
        sum_cre[k] += np.add.reduce(cre)
        sum_cim[k] += np.add.reduce(cim)
    return 0


def _advance_cqed(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dw, z):
    """Euler step of the homodyne equation in the informational/back-action split."""
    cre_n = cre + (omega * cim - g_d * cre) * dt + (s_ci * z * cre - s_ba * cim) * dw
    cim_n = cim + (-omega * cre - g_d * cim) * dt + (s_ci * z * cim + s_ba * cre) * dw
    r[:] = r - s_ci * (1.0 - z) * r * dw
    cre[:] = cre_n
    cim[:] = cim_n


def evolve_cqed(r, cre, cim, g_ci, g_ba, g_d, omega, dt, normals, x_out=None) -> int:
    """Homodyne trajectory batch: rates (informational, back-action, dephasing)."""
    sqdt = math.sqrt(dt)
    s_ci = math.sqrt(g_ci)
    s_ba = math.sqrt(g_ba)
    m = s_ci * dt
    for k in range(normals.shape[0]):
        dw = normals[k] * sqdt
        z = 2.0 * r - 1.0
        if x_out is not None:
            x_out += dw - m * z
        _advance_cqed(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dw, z)
        if _clamp(r):
            return 1
    return 0


def mc_cqed(r, cre, cim, g_ci, g_ba, g_d, omega, dt, normals, uniforms, x_out) -> int:
    """Homodyne batch with mixture-sampled records (excited state maps to -eps)."""
    sqdt = math.sqrt(dt)
    s_ci = math.sqrt(g_ci)
    s_ba = math.sqrt(g_ba)
    m = s_ci * dt
    for k in range(normals.shape[0]):
        z = 2.0 * r - 1.0
        sign = np.where(uniforms[k] < r, -1.0, 1.0)
        x = m * sign + sqdt * normals[k]
        dw = x + m * z
        x_out += x
        _advance_cqed(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dw, z)
        if _clamp(r):
            return 1
    return 0


def evolve_cqed_traced(
    r, cre, cim, g_ci, g_ba, g_d, omega, dt, normals, sum_r, sum_cre, sum_cim
) -> int:
    sqdt = math.sqrt(dt)
    s_ci = math.sqrt(g_ci)
    s_ba = math.sqrt(g_ba)
    for k in range(normals.shape[0]):
        dw = normals[k] * sqdt
        z = 2.0 * r - 1.0
        _advance_cqed(r, cre, cim, s_ci, s_ba, g_d, omega, dt, dw, z)
        if _clamp(r):
            return 1
        sum_r[k] += np.add.reduce(r)
        sum_cre[k] += np.add.reduce(cre)
        sum_cim[k] += np.add.reduce(cim)
    return 0
