"""Dispersive circuit-QED homodyne readout of a qubit.

A driven cavity whose frequency shifts by +-chi with the qubit state leaks a
coherent signal beta = alpha2 - alpha1 into a homodyne detector at local
oscillator phase phi. In the bad-cavity limit the cavity follows the qubit
and the qubit obeys a diffusive trajectory equation with three rates:

    gamma_ci = kappa |beta|^2 cos^2(phi - theta_beta)  (informational)
    gamma_ba = kappa |beta|^2 sin^2(phi - theta_beta)  (back-action)
    gamma_d  = 2 chi Im(alpha1 alpha2*)                (ensemble dephasing)

with record x = -sqrt(gamma_ci) z dt + dW (the excited qubit pushes the
record negative) and an AC-Stark shifted precession omega_tilde. For steady
driving gamma_d equals (gamma_ci + gamma_ba) / 2 identically: information
gained plus back-action imparted exhausts the coherence lost.

Integrating the record over a window t_m gives an exact conditioned update
(populations by Bayes' rule, coherence damped and rotated, with the
back-action quadrature imprinting the record linearly onto the phase) and
closed-form post-selected averages that generalize the plain-detector ones:
the finite-strength result keeps the same saturating shape with a modified
weak value evaluated in the frame rotated by omega_tilde t_m.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import mc, rng
from .bayes import GaussianLikelihood, bayes_update, posterior_arrays
from .core import (
    AavWeakValue,
    PrePostSelection,
    PureState,
    QubitState,
    aav_weak_value,
)
from .errors import (
    BadCavityWarning,
    DegenerateDenominator,
    DenominatorWarning,
    NoConvergence,
    StateInvariantViolation,
)
from .kernels import evolve_cqed_traced, mc_cqed
from .trajectory import EnsembleTrace
from .weak_values import (
    McWeakValue,
    _selection_coeffs,
    finalize_mc,
    selection_prob_arrays,
)


@dataclass(frozen=True)
class CqedParams:
    """Dispersive readout parameters.

    chi: dispersive shift, kappa: cavity linewidth, eps_m: measurement drive
    amplitude, delta_r: drive detuning from the bare cavity, phi_lo: homodyne
    local-oscillator phase. omega_q is the qubit splitting in the rotating
    frame of choice; omega_convention selects whether the dispersive chi is
    already absorbed into omega_q ("bare", default) or added explicitly
    ("dispersive"). purity scales the initial coherence magnitude to model
    preparation imperfections in the closed forms and updates.
    """

    chi: float
    kappa: float
    eps_m: float
    delta_r: float = 0.0
    phi_lo: float = 0.0
    omega_q: float = 0.0
    purity: float = 1.0
    omega_convention: str = "bare"

    def __post_init__(self):
        if not (self.kappa > 0.0):
            raise ValueError("kappa must be positive")
        if not (0.0 < self.purity <= 1.0):
            raise ValueError("purity must lie in (0, 1]")
        if self.omega_convention not in ("bare", "dispersive"):
            raise ValueError(
                f"omega_convention must be 'bare' or 'dispersive', got {self.omega_convention!r}"
            )
        if abs(self.chi) >= 0.1 * self.kappa:
            warnings.warn(
                f"|chi|/kappa = {abs(self.chi) / self.kappa:.3g}; the adiabatic "
                "(bad-cavity) reduction assumes |chi| << kappa",
                BadCavityWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class CavityFields:
    """Steady coherent amplitudes conditioned on the two qubit states."""

    alpha1: complex
    alpha2: complex

    @property
    def beta(self) -> complex:
        return self.alpha2 - self.alpha1

    @property
    def abs_beta(self) -> float:
        return abs(self.beta)

    @property
    def theta_beta(self) -> float:
        """Signal-quadrature angle, defined modulo pi and folded into (-pi/2, pi/2].

        Only the quadrature line matters physically; the sign of beta flips
        the record sign convention, not which quadrature carries information.
        """
        th = math.remainder(math.atan2(self.beta.imag, self.beta.real), math.pi)
        if th <= -math.pi / 2.0:
            th += math.pi
        return th

    @property
    def nbar(self) -> float:
        """Mean intracavity photon number averaged over the two pointer states."""
        return 0.5 * (abs(self.alpha1) ** 2 + abs(self.alpha2) ** 2)


def steady_fields(p: CqedParams) -> CavityFields:
    """Steady-state pointer amplitudes of the driven cavity."""
    a1 = -1j * p.eps_m / (-1j * (p.delta_r + p.chi) + 0.5 * p.kappa)
    a2 = -1j * p.eps_m / (-1j * (p.delta_r - p.chi) + 0.5 * p.kappa)
    return CavityFields(a1, a2)


@dataclass(frozen=True)
class CqedRates:
    """Trajectory rates at a particular local-oscillator phase."""

    gamma_ci: float
    gamma_ba: float
    gamma_d: float
    ac_stark: float
    omega_tilde: float

    @property
    def kappa_beta2(self) -> float:
        """Total emission rate kappa |beta|^2 = gamma_ci + gamma_ba."""
        return self.gamma_ci + self.gamma_ba

    @property
    def gamma_d_total(self) -> float:
        """(gamma_ci + gamma_ba) / 2; equals gamma_d for steady driving."""
        return 0.5 * self.kappa_beta2


def rates(fields: CavityFields, p: CqedParams, phi: float | None = None) -> CqedRates:
    """Measurement, back-action, dephasing, and Stark rates at LO phase phi."""
    if phi is None:
        phi = p.phi_lo
    a12 = fields.alpha1 * fields.alpha2.conjugate()
    gamma_d = 2.0 * p.chi * a12.imag
    ac_stark = 2.0 * p.chi * a12.real
    kb2 = p.kappa * fields.abs_beta**2
    d = phi - fields.theta_beta
    g_ci = kb2 * math.cos(d) ** 2
    g_ba = kb2 * math.sin(d) ** 2
    omega = p.omega_q + ac_stark + (p.chi if p.omega_convention == "dispersive" else 0.0)
    return CqedRates(g_ci, g_ba, gamma_d, ac_stark, omega)


def sample_cqed_output(state: QubitState, r: CqedRates, dt: float, dW: float) -> float:
    return -math.sqrt(r.gamma_ci) * state.expect_z * dt + dW


def step_cqed_qte(state: QubitState, r: CqedRates, dt: float, dW: float) -> QubitState:
    """One Euler step of the homodyne trajectory equation."""
    s_ci = math.sqrt(r.gamma_ci)
    s_ba = math.sqrt(r.gamma_ba)
    z = state.expect_z
    rho11 = state.rho11 - s_ci * (1.0 - z) * state.rho11 * dW
    c = state.rho12
    c = (
        c
        + (-1j * r.omega_tilde - r.gamma_d) * c * dt
        + (s_ci * z + 1j * s_ba) * c * dW
    )
    return QubitState(rho11, c)


def _window_likelihood(r: CqedRates, t_m: float) -> GaussianLikelihood:
    s_ci = math.sqrt(r.gamma_ci)
    return GaussianLikelihood(-s_ci * t_m, s_ci * t_m, t_m, degenerate_ok=True)


def bayes_cqed(
    state: QubitState, x: float, r: CqedRates, t_m: float, purity: float = 1.0
) -> QubitState:
    """Exact conditioned state after integrating the homodyne record over t_m.

    Populations update by Bayes' rule on the two record centers -+
    sqrt(gamma_ci) t_m. The coherence keeps the Bayes magnitude factor and
    acquires the deterministic precession and a record-linear phase from the
    back-action quadrature: exp(i (sqrt(gamma_ba) x - omega_tilde t_m)).
    This is the per-record solution of the trajectory equation, so chaining
    windows reproduces stepping in law.
    """
    if t_m <= 0.0:
        raise ValueError("t_m must be positive")
    base = bayes_update(state, x, _window_likelihood(r, t_m))
    phase = complex(
        math.cos(math.sqrt(r.gamma_ba) * x - r.omega_tilde * t_m),
        math.sin(math.sqrt(r.gamma_ba) * x - r.omega_tilde * t_m),
    )
    return QubitState(base.rho11, base.rho12 * purity * phase)


def _cqed_posterior_arrays(r0, c0, x, r: CqedRates, t_m: float, purity: float):
    s_ci = math.sqrt(r.gamma_ci)
    s_ba = math.sqrt(r.gamma_ba)
    inv = 1.0 / (2.0 * t_m)
    e1 = -((x + s_ci * t_m) ** 2) * inv
    e2 = -((x - s_ci * t_m) ** 2) * inv
    rt, coh = posterior_arrays(r0, e1, e2)
    ct = c0 * purity * coh * np.exp(1j * (s_ba * x - r.omega_tilde * t_m))
    return rt, ct


def modified_weak_value(pps: PrePostSelection, omega_tilde: float, t_m: float) -> AavWeakValue:
    """Weak value with the prepared state evolved by the measured-frame rotation."""
    ph = complex(math.cos(omega_tilde * t_m), -math.sin(omega_tilde * t_m))
    psi_mod = PureState(pps.psi_i.c1 * ph, pps.psi_i.c2)
    return aav_weak_value(PrePostSelection(psi_mod, pps.psi_f))


def wv_cqed_short(pps: PrePostSelection, r: CqedRates, t_m: float) -> float:
    """Post-selected record mean to first order in the window length.

    Both quadratures contribute: the informational one couples to Re w, the
    back-action one to Im w (phase kicks read out through the post-selection).
    The denominator correction must stay small for the expansion to hold; a
    DenominatorWarning flags |correction| >= 0.5.
    """
    w = aav_weak_value(pps)
    num = -t_m * (math.sqrt(r.gamma_ci) * w.re + math.sqrt(r.gamma_ba) * w.im)
    corr = (r.omega_tilde * w.im + 0.5 * r.gamma_d_total * (w.abs2 - 1.0)) * t_m
    if abs(corr) >= 0.5:
        warnings.warn(
            f"first-order denominator correction is {corr:.3g}; extend to the "
            "finite-window form",
            DenominatorWarning,
            stacklevel=2,
        )
    den = 1.0 + corr
    if abs(den) < 1e-14:
        raise DegenerateDenominator("first-order denominator vanished")
    return num / den


class CqedFiniteWv(NamedTuple):
    """Finite-window average, computed two equivalent ways.

    from_moments evaluates the selection-weighted record moments directly;
    from_modified evaluates the compact saturating form in the modified weak
    value (nan when the modified selection is orthogonal). value is the
    moment route.
    """

    value: float
    from_moments: float
    from_modified: float
    w_mod: complex


def wv_cqed_finite(
    pps: PrePostSelection, r: CqedRates, t_m: float, purity: float = 1.0
) -> CqedFiniteWv:
    """Exact post-selected mean of the integrated record over a window t_m.

    Moment route: with q = f1* c1, p = f2* c2 and the surviving coherence
    G' = purity * exp(-gamma_d_total t_m),

        M1 = -sqrt(g_ci) t_m (|q|^2 - |p|^2)
             + 2 sqrt(g_ba) t_m G' Im(q* p e^(i omega_tilde t_m)),
        M2 = |q|^2 + |p|^2 + 2 G' Re(q* p e^(i omega_tilde t_m)).

    Compact route: -[e1 Re w~ + e2 Im w~] / (1 + G(|w~|^2 - 1)) with
    e1 = sqrt(g_ci) t_m, e2 = sqrt(g_ba) t_m G', G = (1 - G') / 2, and w~ the
    modified weak value. The two agree identically.
    """
    if t_m <= 0.0:
        raise ValueError("t_m must be positive")
    f1, f2 = pps.psi_f.c1, pps.psi_f.c2
    c1, c2 = pps.psi_i.c1, pps.psi_i.c2
    q = f1.conjugate() * c1
    p = f2.conjugate() * c2
    gp = purity * math.exp(-r.gamma_d_total * t_m)
    ph = complex(math.cos(r.omega_tilde * t_m), math.sin(r.omega_tilde * t_m))
    qp = q.conjugate() * p * ph
    e1 = math.sqrt(r.gamma_ci) * t_m
    e2 = math.sqrt(r.gamma_ba) * t_m * gp
    m1 = -e1 * (abs(q) ** 2 - abs(p) ** 2) + 2.0 * e2 * qp.imag
    m2 = abs(q) ** 2 + abs(p) ** 2 + 2.0 * gp * qp.real
    if abs(m2) < 1e-14:
        raise DegenerateDenominator("post-selection weight vanished")
    from_moments = m1 / m2

    G = 0.5 * (1.0 - gp)
    ph_conj = ph.conjugate()
    ov_mod = q * ph_conj + p
    if abs(ov_mod) ** 2 < 1e-12:
        from_modified = math.nan
        w_mod = complex(math.nan, math.nan)
    else:
        w_mod = (q * ph_conj - p) / ov_mod
        from_modified = -(e1 * w_mod.real + e2 * w_mod.imag) / (
            1.0 + G * (abs(w_mod) ** 2 - 1.0)
        )
    return CqedFiniteWv(from_moments, from_moments, from_modified, w_mod)


def _cqed_block(args):
    """Draw order: single-shot draws branch uniforms, record normals,
    acceptance uniforms; stepped mode draws per-chunk normal and uniform
    panels, then acceptance uniforms."""
    (seed, block_index, start, size, n_total, kind, params) = args
    g = rng.block_stream(seed, rng.CQED, block_index)
    if kind == "single":
        (r0, c0, f11, w12, g_ci, g_ba, g_d, omega, t_m, purity) = params
        rr = CqedRates(g_ci, g_ba, g_d, 0.0, omega)
        s_ci = math.sqrt(g_ci)
        u = g.random(size)
        nx = g.standard_normal(size)
        ua = g.random(size)
        x = np.where(u < r0, -s_ci * t_m, s_ci * t_m) + math.sqrt(t_m) * nx
        rt, ct = _cqed_posterior_arrays(r0, c0, x, rr, t_m, purity)
        p = selection_prob_arrays(rt, ct, f11, w12)
    else:
        (r0, c0, f11, w12, g_ci, g_ba, g_d, omega, dt, steps) = params
        r = np.full(size, r0)
        cre = np.full(size, c0.real)
        cim = np.full(size, c0.imag)
        x = np.zeros(size)
        done = 0
        while done < steps:
            cs = min(rng.STEP_CHUNK, steps - done)
            normals = g.standard_normal((cs, size))
            uniforms = g.random((cs, size))
            if mc_cqed(r, cre, cim, g_ci, g_ba, g_d, omega, dt, normals, uniforms, x):
                raise StateInvariantViolation(
                    f"population left [0, 1] during homodyne stepping at dt={dt!r}"
                )
            done += cs
        ua = g.random(size)
        p = selection_prob_arrays(r, cre + 1j * cim, f11, w12)
    accepted = ua < p
    bids = mc.batch_ids(start, size, n_total)
    return mc.BlockPartial.from_arrays(x, p, accepted, bids)


def mc_weak_value_cqed(
    pps: PrePostSelection,
    r: CqedRates,
    t_m: float,
    n_traj: int,
    seed: int,
    dt: float | None = None,
    mode: str = "both",
    workers: int | None = None,
    purity: float = 1.0,
) -> McWeakValue:
    """Monte Carlo post-selected mean of the integrated homodyne record.

    With dt=None each trajectory is one exact conditioned update (equivalent
    in law to stepping). With a dt the Euler kernel integrates the window;
    purity is a preparation property and does not apply to stepped dynamics.
    """
    rho_i = pps.psi_i.density()
    f11, w12 = _selection_coeffs(pps.psi_f)
    if dt is None:
        kind = "single"
        params = (rho_i.rho11, rho_i.rho12, f11, w12, r.gamma_ci, r.gamma_ba,
                  r.gamma_d, r.omega_tilde, t_m, purity)
    else:
        steps = round(t_m / dt)
        if abs(steps * dt - t_m) > 1e-9 * t_m:
            raise ValueError("t_m must be an integer multiple of dt")
        if purity != 1.0:
            raise ValueError("purity applies to the single-shot update only")
        kind = "stepped"
        params = (rho_i.rho11, rho_i.rho12, f11, w12, r.gamma_ci, r.gamma_ba,
                  r.gamma_d, r.omega_tilde, dt, steps)
    args = [
        (seed, b, start, size, n_traj, kind, params)
        for b, start, size in rng.iter_blocks(n_traj)
    ]
    parts = mc.run_blocks(_cqed_block, args, workers)
    return finalize_mc(parts, n_traj, math.sqrt(r.gamma_ci) * t_m, mode)


def _cqed_traced_block(args):
    (seed, block_index, size, r0, c0re, c0im, g_ci, g_ba, g_d, omega, dt, steps) = args
    g = rng.block_stream(seed, rng.CQED, block_index)
    r = np.full(size, r0)
    cre = np.full(size, c0re)
    cim = np.full(size, c0im)
    sum_r = np.zeros(steps)
    sum_cre = np.zeros(steps)
    sum_cim = np.zeros(steps)
    done = 0
    while done < steps:
        cs = min(rng.STEP_CHUNK, steps - done)
        normals = g.standard_normal((cs, size))
        status = evolve_cqed_traced(
            r, cre, cim, g_ci, g_ba, g_d, omega, dt, normals,
            sum_r[done : done + cs], sum_cre[done : done + cs], sum_cim[done : done + cs],
        )
        if status:
            return None
        done += cs
    return sum_r, sum_cre, sum_cim


def ensemble_coherence_cqed(
    state0: QubitState,
    r: CqedRates,
    dt: float,
    t_total: float,
    n_traj: int,
    seed: int,
    workers: int | None = None,
) -> EnsembleTrace:
    """Ensemble mean state under homodyne monitoring.

    The averaged coherence decays at gamma_d and precesses at omega_tilde
    regardless of the LO phase; the quadrature split moves information
    between the record and the phase but cannot change the ensemble."""
    steps = round(t_total / dt)
    if abs(steps * dt - t_total) > 1e-9 * t_total:
        raise ValueError("t_total must be an integer multiple of dt")
    args = [
        (seed, b, size, state0.rho11, state0.rho12.real, state0.rho12.imag,
         r.gamma_ci, r.gamma_ba, r.gamma_d, r.omega_tilde, dt, steps)
        for b, _start, size in rng.iter_blocks(n_traj)
    ]
    parts = mc.run_blocks(_cqed_traced_block, args, workers)
    sum_r = np.zeros(steps)
    sum_cre = np.zeros(steps)
    sum_cim = np.zeros(steps)
    for p in parts:
        if p is None:
            raise StateInvariantViolation(
                f"population left [0, 1] during homodyne stepping at dt={dt!r}"
            )
        sum_r += p[0]
        sum_cre += p[1]
        sum_cim += p[2]
    times = dt * np.arange(steps + 1)
    mean_r = np.concatenate(([state0.rho11], sum_r / n_traj))
    mean_c = np.concatenate(([state0.rho12], (sum_cre + 1j * sum_cim) / n_traj))
    return EnsembleTrace(times, mean_r, mean_c, n_traj)


@dataclass(frozen=True)
class TomographyResult:
    """Reconstructed preparation from two-quadrature post-selected averages."""

    state: PureState
    w_mod: complex
    iterations: int
    singular: bool


def tomography(
    psi_f: PureState,
    value_informational: float,
    value_backaction: float,
    r: CqedRates,
    t_m: float,
    purity: float = 1.0,
    max_iter: int = 60,
    tol: float = 1e-9,
) -> TomographyResult:
    """Invert two quadrature averages into the prepared pure state.

    The informational-quadrature run reads -e1 Re w~ / (1 + G(|w~|^2 - 1))
    and the back-action run -e2 Im w~ / (same), with the full emission rate
    kappa |beta|^2 behind e1, e2, G in both runs. The linear inversion
    w~ = v0 is corrected by iterating w <- v0 (1 + G(|w|^2 - 1)), halving
    the step when the residual grows; NoConvergence reports parameters for
    which no consistent weak value exists (saturated averages).

    The post-selection must overlap both basis states (f1, f2 nonzero), or
    the two averages cannot determine the state. w~ = 1 is singular: the
    prepared state is the excited state and the back-action average carries
    no further information.
    """
    f1, f2 = psi_f.c1, psi_f.c2
    if abs(f1) < 1e-12 or abs(f2) < 1e-12:
        raise ValueError("post-selection must overlap both basis states")
    kb2 = r.kappa_beta2
    if kb2 <= 0.0:
        raise ValueError("readout rate kappa |beta|^2 must be positive")
    gp = purity * math.exp(-0.5 * kb2 * t_m)
    e1 = math.sqrt(kb2) * t_m
    e2 = e1 * gp
    G = 0.5 * (1.0 - gp)
    v0 = complex(-value_informational / e1, -value_backaction / e2)

    w = v0
    prev_d = None
    iterations = max_iter
    converged = False
    for it in range(1, max_iter + 1):
        if abs(w) > 1e12:
            raise NoConvergence(
                f"weak-value iteration diverged (|w| = {abs(w):.3g} at step {it}); "
                "the averages may exceed the saturation bound for these parameters"
            )
        wn = v0 * (1.0 + G * (abs(w) ** 2 - 1.0))
        d = abs(wn - w)
        if d < tol:
            w = wn
            iterations = it
            converged = True
            break
        if prev_d is not None and d > prev_d:
            wn = 0.5 * (w + wn)
            d = abs(wn - w)
        w = wn
        prev_d = d
    if not converged:
        raise NoConvergence(
            f"weak-value fixed point did not converge in {max_iter} iterations "
            f"(last residual {prev_d:.3g}); the averages may exceed the "
            "saturation bound for these parameters"
        )

    if abs(1.0 - w) < 1e-12 * (1.0 + abs(w)):
        return TomographyResult(PureState(1.0 + 0.0j, 0.0j), w, iterations, True)

    ph = complex(math.cos(r.omega_tilde * t_m), math.sin(r.omega_tilde * t_m))
    ratio = (f2.conjugate() / f1.conjugate()) * (1.0 + w) / (1.0 - w)
    state = PureState.from_unnormalized(ratio * ph, 1.0 + 0.0j)
    return TomographyResult(state, w, iterations, False)
