"""Post-selected record averages: closed forms and Monte Carlo estimators.

Conventions. Functions parameterized by the pre/post-selection and a
dimensionless strength return the scaled average (record mean divided by the
window response epsilon), which tends to Re w in the weak limit. Functions
parameterized by an explicit readout likelihood return the raw record mean;
dividing by the likelihood's half-separation recovers the scaled form.

The exact finite-strength result replaces the naive strength g = gamma * t
by the saturating 0.5 * (1 - exp(-2g)): post-selected averages never exceed
the bound 1 / (2 sqrt(G(1-G))) no matter how anomalous the weak value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mc, rng
from .bayes import GaussianLikelihood, bayes_update, posterior_arrays
from .core import PrePostSelection, PureState, QubitState, aav_weak_value, selection_probability
from .errors import DegenerateDenominator, StateInvariantViolation
from .kernels import mc_generic
from .trajectory import MeasurementStrength, Stepper


def wv_aav_linear(pps: PrePostSelection) -> float:
    """Weak-limit (linear-response) value: Re of the two-state weak value."""
    return aav_weak_value(pps).re


def wv_short_time(pps: PrePostSelection, g: float) -> float:
    """Scaled average at strength g, first order in the measurement time.

    Valid while g = gamma * t is small; the denominator 1 + g(|w|^2 - 1) can
    pass through zero for g near 1/(1 - |w|^2), where the expansion has broken
    down (DegenerateDenominator).
    """
    w = aav_weak_value(pps)
    den = 1.0 + g * (w.abs2 - 1.0)
    if abs(den) < 1e-14:
        raise DegenerateDenominator(
            f"short-time denominator vanished at g={g!r}; use wv_finite_strength"
        )
    return w.re / den


def _overlap_moments(rho_i: QubitState, psi_f: PureState):
    """Selection-weighted moments: diagonal weights and damped cross term."""
    f1, f2 = psi_f.c1, psi_f.c2
    a11 = abs(f1) ** 2 * rho_i.rho11
    a22 = abs(f2) ** 2 * rho_i.rho22
    cross = 2.0 * (f1.conjugate() * f2 * rho_i.rho12).real
    return a11, a22, cross


def wv_finite_strength(pps: PrePostSelection, g: float) -> float:
    """Exact scaled average for any strength: Re w / (1 + G(|w|^2 - 1)),
    G = (1 - exp(-2g)) / 2.

    Near-orthogonal selections are evaluated through the selection-weighted
    moments instead of w itself, which stays finite as <f|i> -> 0.
    """
    if g < 0.0:
        raise ValueError("strength g must be non-negative")
    G = 0.5 * (1.0 - math.exp(-2.0 * g))
    if abs(pps.overlap) ** 2 < 1e-12:
        a11, a22, cross = _overlap_moments(pps.psi_i.density(), pps.psi_f)
        den = a11 + a22 + (1.0 - 2.0 * G) * cross
        if abs(den) < 1e-14:
            raise DegenerateDenominator("selection probability vanished at this strength")
        return (a11 - a22) / den
    w = aav_weak_value(pps)
    return w.re / (1.0 + G * (w.abs2 - 1.0))


def wv_bayes_general(pps: PrePostSelection, lik: GaussianLikelihood) -> float:
    """Raw post-selected record mean under an arbitrary two-center readout.

    Both moments follow from the mixture law for the record: M1 mixes the
    centers with diagonal weights plus the coherence cross term at the center
    midpoint, damped by the likelihood's coherence factor.
    """
    a11, a22, cross = _overlap_moments(pps.psi_i.density(), pps.psi_f)
    gb = lik.coherence_factor
    m2 = a11 + a22 + gb * cross
    if abs(m2) < 1e-14:
        raise DegenerateDenominator("post-selection weight vanished")
    m1 = lik.xbar1 * a11 + lik.xbar2 * a22 + lik.midpoint * gb * cross
    return m1 / m2


def wv_quadrature(pps: PrePostSelection, lik: GaussianLikelihood, n_points: int = 64) -> float:
    """Raw record mean by Gauss-Hermite quadrature over the record density.

    Independent of the closed forms: integrates x * P(select | x) against the
    two mixture components using the exact conditioned-state update.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(n_points)
    rho_i = pps.psi_i.density()
    scale = math.sqrt(2.0 * lik.D)
    m1 = 0.0
    m2 = 0.0
    for weight_j, center in ((rho_i.rho11, lik.xbar1), (rho_i.rho22, lik.xbar2)):
        if weight_j == 0.0:
            continue
        for t, wk in zip(nodes, weights):
            x = center + scale * t
            p_sel = selection_probability(bayes_update(rho_i, x, lik), pps.psi_f)
            common = weight_j * wk / math.sqrt(math.pi)
            m1 += common * x * p_sel
            m2 += common * p_sel
    if abs(m2) < 1e-14:
        raise DegenerateDenominator("post-selection weight vanished")
    return m1 / m2


@dataclass(frozen=True)
class WeakValueEstimate:
    """One Monte Carlo estimate with its batch-scatter standard error."""

    mean: float
    std_error: float
    n_total: int
    n_selected: int
    success_rate: float


@dataclass(frozen=True)
class McWeakValue:
    """Paired estimators from one trajectory ensemble.

    ``weighted`` averages every record with its selection probability;
    ``rejection`` keeps records that pass a Bernoulli selection draw (None
    when not requested). Means are raw record averages; ``scaled`` divides
    by the stored window response.
    """

    epsilon: float
    weighted: WeakValueEstimate
    rejection: WeakValueEstimate | None
    mean_weight: float

    def scaled(self, which: str = "weighted"):
        est = {"weighted": self.weighted, "rejection": self.rejection}[which]
        if est is None:
            raise ValueError("rejection estimator was not requested for this run")
        return est.mean / self.epsilon, est.std_error / self.epsilon


def _selection_coeffs(psi_f: PureState):
    return abs(psi_f.c1) ** 2, psi_f.c1.conjugate() * psi_f.c2


def selection_prob_arrays(rho11, rho12, f11: float, w12: complex):
    """Vectorized <f|rho|f>, clipped into [0, 1]."""
    p = f11 * rho11 + (1.0 - f11) * (1.0 - rho11) + 2.0 * (w12 * rho12).real
    return np.clip(p, 0.0, 1.0)


def _mc_block(args):
    """One trajectory block of the generic estimator.

    Draw order (fixed layout): single-shot mode draws branch uniforms, record
    normals, then acceptance uniforms; stepped mode draws per-chunk normal and
    uniform panels for the kernel, then acceptance uniforms.
    """
    (seed, block_index, start, size, n_total, kind, params) = args
    g = rng.block_stream(seed, rng.SELECTION, block_index)
    if kind == "single":
        (r0, c0, f11, w12, eps, D) = params
        u = g.random(size)
        nx = g.standard_normal(size)
        ua = g.random(size)
        x = np.where(u < r0, eps, -eps) + math.sqrt(D) * nx
        inv = 1.0 / (2.0 * D)
        e1 = -((x - eps) ** 2) * inv
        e2 = -((x + eps) ** 2) * inv
        rt, coh = posterior_arrays(r0, e1, e2)
        p = selection_prob_arrays(rt, c0 * coh, f11, w12)
    else:
        (r0, c0, f11, w12, gamma, dt, steps, code) = params
        r = np.full(size, r0)
        cre = np.full(size, c0.real)
        cim = np.full(size, c0.imag)
        x = np.zeros(size)
        done = 0
        while done < steps:
            cs = min(rng.STEP_CHUNK, steps - done)
            normals = g.standard_normal((cs, size))
            uniforms = g.random((cs, size))
            if mc_generic(code, r, cre, cim, gamma, dt, normals, uniforms, x):
                raise StateInvariantViolation(
                    f"population left [0, 1] during Monte Carlo stepping at dt={dt!r}"
                )
            done += cs
        ua = g.random(size)
        p = selection_prob_arrays(r, cre + 1j * cim, f11, w12)
    accepted = ua < p
    bids = mc.batch_ids(start, size, n_total)
    return mc.BlockPartial.from_arrays(x, p, accepted, bids)


def finalize_mc(parts, n_total: int, epsilon: float, mode: str) -> McWeakValue:
    """Merge block partials (in block order) into the paired estimate."""
    if mode not in ("both", "weighted"):
        raise ValueError(f"mode must be 'both' or 'weighted', got {mode!r}")
    tot = mc.merge_partials(parts)
    w_mean, w_se = mc.ratio_statistics(tot.sum_xp, tot.sum_p)
    weighted = WeakValueEstimate(w_mean, w_se, n_total, n_total, 1.0)
    mean_weight = float(np.sum(tot.sum_p)) / n_total
    rejection = None
    if mode == "both":
        n_sel = int(round(float(np.sum(tot.n_acc))))
        mc.require_selections(n_sel, n_total)
        r_mean, r_se = mc.ratio_statistics(tot.sum_x_acc, tot.n_acc)
        rejection = WeakValueEstimate(r_mean, r_se, n_total, n_sel, n_sel / n_total)
    return McWeakValue(epsilon, weighted, rejection, mean_weight)


def mc_weak_value(
    pps: PrePostSelection,
    ms: MeasurementStrength,
    stepper: Stepper,
    n_traj: int,
    seed: int,
    mode: str = "both",
    workers: int | None = None,
) -> McWeakValue:
    """Monte Carlo post-selected record average over simulated trajectories.

    Records are sampled from the state-weighted outcome mixture, which is
    their exact distribution. With the exact-Bayes stepper the whole window
    collapses to a single draw (chaining and one-shot updates agree in law),
    so that path doubles as a fast strong-measurement sampler.
    """
    rho_i = pps.psi_i.density()
    f11, w12 = _selection_coeffs(pps.psi_f)
    if stepper is Stepper.BAYES_EXACT:
        kind = "single"
        params = (rho_i.rho11, rho_i.rho12, f11, w12, ms.epsilon, ms.variance)
    else:
        ms.warn_if_coarse(stepper)
        kind = "stepped"
        params = (rho_i.rho11, rho_i.rho12, f11, w12, ms.gamma, ms.dt_step, ms.n_steps,
                  stepper.code)
    args = [
        (seed, b, start, size, n_traj, kind, params)
        for b, start, size in rng.iter_blocks(n_traj)
    ]
    parts = mc.run_blocks(_mc_block, args, workers)
    return finalize_mc(parts, n_traj, ms.epsilon, mode)


def pps_for_theta(theta: float) -> PrePostSelection:
    """Equator-prepared qubit post-selected at polar angle theta.

    The weak value is tan(theta / 2): arbitrarily anomalous as theta -> pi,
    where the selection becomes orthogonal.
    """
    psi_i = PureState(complex(1.0 / math.sqrt(2.0)), complex(1.0 / math.sqrt(2.0)))
    psi_f = PureState(
        complex(math.cos(theta / 2.0 - math.pi / 4.0)),
        complex(math.cos(theta / 2.0 + math.pi / 4.0)),
    )
    return PrePostSelection(psi_i, psi_f)


def wv_curve_peak(strength: float):
    """Analytic turnover of the scaled average over post-selection angle.

    For effective strength s in (0, 1): maximum 1 / (2 sqrt(s(1-s))) at
    w = sqrt((1-s)/s), i.e. theta = 2 atan(w).
    """
    if not (0.0 < strength < 1.0):
        raise ValueError("turnover exists for strengths strictly inside (0, 1)")
    w_star = math.sqrt((1.0 - strength) / strength)
    return 2.0 * math.atan(w_star), 1.0 / (2.0 * math.sqrt(strength * (1.0 - strength)))


@dataclass
class ThetaCurve:
    """Scaled averages across post-selection angles at fixed strength g."""

    g: float
    theta: np.ndarray
    aav: np.ndarray
    short_time: np.ndarray
    finite: np.ndarray

    @property
    def effective_strength(self) -> float:
        return 0.5 * (1.0 - math.exp(-2.0 * self.g))


def wv_theta_curve(g: float, thetas) -> ThetaCurve:
    """Tabulate linear, short-time, and exact scaled averages over angles."""
    thetas = np.asarray(thetas, dtype=float)
    aav = np.empty_like(thetas)
    short = np.empty_like(thetas)
    finite = np.empty_like(thetas)
    for i, th in enumerate(thetas):
        pps = pps_for_theta(float(th))
        aav[i] = wv_aav_linear(pps)
        short[i] = wv_short_time(pps, g)
        finite[i] = wv_finite_strength(pps, g)
    return ThetaCurve(g, thetas, aav, short, finite)


def write_theta_csv(curve: ThetaCurve, path, mc_points=None) -> None:
    """Curve table; optional MC rows are (theta, scaled mean, scaled se)."""
    mc_map = {}
    if mc_points:
        mc_map = {float(th): (m, se) for th, m, se in mc_points}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\n")
        fh.write(f"# g={curve.g:.17g} effective_strength={curve.effective_strength:.17g}\n")
        fh.write("theta,aav,short_time,finite,mc_mean,mc_se\n")
        for i, th in enumerate(curve.theta):
            m, se = mc_map.get(float(th), (math.nan, math.nan))
            fh.write(
                f"{th:.17g},{curve.aav[i]:.17g},{curve.short_time[i]:.17g},"
                f"{curve.finite[i]:.17g},{m:.17g},{se:.17g}\n"
            )
