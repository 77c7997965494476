"""Exact conditioned-state updates for Gaussian readout.

A weak z-basis measurement of duration tau produces a record
x ~ rho11 N(xbar1, D) + rho22 N(xbar2, D). Conditioned on x, the state updates
by Bayes' rule on the diagonals while the coherence is damped by the
geometric-mean likelihood:

    rho11' = rho11 P1(x) / N,   rho22' = rho22 P2(x) / N,
    rho12' = rho12 sqrt(P1 P2) / N,      N = rho11 P1 + rho22 P2.

This map is exact for any measurement strength and composes: chaining updates
over sub-intervals with the summed record equals a single update over the full
interval. It therefore serves both as the strong-measurement update and as the
reference chain the stochastic integrators are measured against.

Likelihood ratios are handled in log space; an update only fails
(ZeroLikelihood) when even the dominant posterior branch sits below e^-700,
which signals a record/parameter mismatch rather than a numerical corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import QubitState
from .errors import ExpansionDiverged, ZeroLikelihood

_LOG_FLOOR = -700.0


@dataclass(frozen=True)
class GaussianLikelihood:
    """Two-outcome Gaussian readout model: centers (xbar1, xbar2), common variance D.

    xbar1 is the record mean conditioned on the +z eigenstate, xbar2 on the -z
    eigenstate. Equal centers carry no population information and must be
    requested explicitly with ``degenerate_ok`` (a phase-only quadrature does
    exactly this).
    """

    xbar1: float
    xbar2: float
    D: float
    degenerate_ok: bool = False

    def __post_init__(self):
        if not (self.D > 0.0) or not math.isfinite(self.D):
            raise ValueError(f"variance must be positive and finite, got {self.D!r}")
        if self.xbar1 == self.xbar2 and not self.degenerate_ok:
            raise ValueError("degenerate centers (xbar1 == xbar2) require degenerate_ok=True")

    @classmethod
    def from_rate(cls, gamma: float, duration: float) -> "GaussianLikelihood":
        """Likelihood of an integrated record of length ``duration`` at rate gamma."""
        if gamma <= 0.0 or duration <= 0.0:
            raise ValueError("gamma and duration must be positive")
        eps = 2.0 * math.sqrt(gamma) * duration
        return cls(eps, -eps, duration)

    @property
    def separation(self) -> float:
        return self.xbar1 - self.xbar2

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.xbar1 + self.xbar2)

    @property
    def coherence_factor(self) -> float:
        """exp(-(xbar1-xbar2)^2 / 8D): record-averaged damping of the coherence."""
        return math.exp(-self.separation**2 / (8.0 * self.D))

    def log_pdf_exponents(self, x):
        """Gaussian exponents (e1, e2) of the two outcome branches at x."""
        inv = 1.0 / (2.0 * self.D)
        d1 = x - self.xbar1
        d2 = x - self.xbar2
        return -(d1 * d1) * inv, -(d2 * d2) * inv


def posterior_arrays(rho11, e1, e2):
    """Vectorized posterior diagonals and coherence factor from log-likelihoods.

    Parameters are arrays (or scalars): prior excited population and the two
    Gaussian exponents. Returns (rho11', coherence multiplier). Stable for any
    exponent ordering; the larger branch is factored out before exponentiation.
    """
    mx = np.maximum(e1, e2)
    w1 = rho11 * np.exp(e1 - mx)
    w2 = (1.0 - rho11) * np.exp(e2 - mx)
    nn = w1 + w2
    return w1 / nn, np.exp(0.5 * (e1 + e2) - mx) / nn


def bayes_update(state: QubitState, x: float, lik: GaussianLikelihood) -> QubitState:
    """Condition ``state`` on a single readout value ``x``.

    Raises ZeroLikelihood when even the dominant weighted branch underflows
    (log weight below -700), which indicates the record was produced by
    different parameters than the likelihood describes.
    """
    e1, e2 = lik.log_pdf_exponents(float(x))
    r = state.rho11
    lw1 = (math.log(r) + e1) if r > 0.0 else -math.inf
    lw2 = (math.log(1.0 - r) + e2) if r < 1.0 else -math.inf
    if max(lw1, lw2) < _LOG_FLOOR:
        raise ZeroLikelihood(
            f"record x={x!r} is incompatible with the readout model "
            f"(dominant log weight {max(lw1, lw2):.1f})"
        )
    r_new, coh = posterior_arrays(r, e1, e2)
    return QubitState(float(r_new), state.rho12 * float(coh))


def bayes_finite_time(state: QubitState, x: float, gamma: float, t_m: float) -> QubitState:
    """Exact update for an integrated record x over a window of length t_m."""
    return bayes_update(state, x, GaussianLikelihood.from_rate(gamma, t_m))


def bayes_expand_small(
    state: QubitState, x: float, lik: GaussianLikelihood, order: int
) -> QubitState:
    """Small-response expansion of the exact update in lam = eps*x/D.

    Requires a symmetric likelihood (xbar1 = -xbar2 = eps). Order 1 is the
    rational first-order update whose midpoint derivative generates the
    Stratonovich drift; order 2 keeps lam^2 terms with the substitution
    (dW)^2 -> dt (dt := D), which reproduces the Ito/Euler step exactly.

    Raises ExpansionDiverged when |lam * <sigma_z>| >= 1 (outside the radius
    of convergence of the rational form).
    """
    if lik.xbar1 != -lik.xbar2:
        raise ValueError("expansion requires a symmetric likelihood (xbar1 = -xbar2)")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    eps = lik.xbar1
    D = lik.D
    lam = eps * x / D
    r = state.rho11
    s = 1.0 - r
    z = r - s
    c = state.rho12
    if abs(lam * z) >= 1.0:
        raise ExpansionDiverged(f"|eps*x/D * <sigma_z>| = {abs(lam * z)!r} >= 1")

    if order == 1:
        den = 1.0 + z * lam
        return QubitState(r * (1.0 + lam) / den, c / den)

    # Order 2: lam = 4 gamma z dt + 2 sqrt(gamma) dW with dt = D. Expanding the
    # exact map gives  d(rho11)  = 2 r s lam - 2 r s z lam^2,
    #                  d(rho12)  = c (-z lam + (z^2 - 1/2) lam^2),
    # and (dW)^2 -> dt turns lam^2 into 4 gamma dt at leading order.
    sqg = eps / (2.0 * D)  # sqrt(gamma)
    gamma = sqg * sqg
    dW = x - eps * z
    lam_lin = 4.0 * gamma * z * D + 2.0 * sqg * dW  # = lam
    lam2_sub = 4.0 * gamma * D  # (2 sqrt(gamma) dW)^2 with (dW)^2 -> dt
    r_new = r + 2.0 * r * s * lam_lin - 2.0 * r * s * z * lam2_sub
    c_new = c * (1.0 - z * lam_lin + (z * z - 0.5) * lam2_sub)
    return QubitState(r_new, c_new)
