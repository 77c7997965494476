"""Classical amplification of the measurement record.

The detector output x passes through a linear amplifier with gain, offset,
and additive Gaussian noise: v_tilde = offset + gain * x + sigma_tilde * xi.
Referred back to the input (v = (v_tilde - offset) / gain, sigma =
sigma_tilde / gain), the conditioned state given v is again an exact Bayes
update, now at inflated variance D + sigma^2 for the populations while the
coherence keeps the intrinsic damping exp(-dx^2 / 8D) set by the quantum
measurement alone.

Post-selected averages of v are invariant under the added noise: the noise
enters the record moments only through even terms that cancel in the ratio.
The Monte Carlo estimator reproduces this at any sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import mc, rng
from .bayes import GaussianLikelihood
from .core import PrePostSelection, QubitState
from .errors import DegenerateDenominator
from .weak_values import (
    McWeakValue,
    _overlap_moments,
    _selection_coeffs,
    finalize_mc,
    selection_prob_arrays,
)


@dataclass(frozen=True)
class AmplifierModel:
    """Linear readout chain: gain > 0, additive offset, output-referred noise."""

    gain: float
    offset: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not (self.gain > 0.0):
            raise ValueError(f"gain must be positive, got {self.gain!r}")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be non-negative")

    @property
    def referred_noise(self) -> float:
        """Amplifier noise referred to the detector input."""
        return self.noise_sigma / self.gain


def amplify(x, model: AmplifierModel, rng_or_noise):
    """Amplifier output for record(s) x; noise from a Generator or given draws."""
    if isinstance(rng_or_noise, np.random.Generator):
        xi = rng_or_noise.standard_normal(np.shape(x))
    else:
        xi = rng_or_noise
    return model.offset + model.gain * np.asarray(x) + model.noise_sigma * xi


def normalize_readout(v_tilde, model: AmplifierModel):
    """Refer an amplifier output back to the detector input."""
    return (np.asarray(v_tilde) - model.offset) / model.gain


def _amplified_posterior(rho11, v, lik: GaussianLikelihood, sigma: float):
    """Posterior diagonals and coherence factor given the referred record v."""
    var = lik.D + sigma * sigma
    inv = 1.0 / (2.0 * var)
    e1 = -((v - lik.xbar1) ** 2) * inv
    e2 = -((v - lik.xbar2) ** 2) * inv
    e3 = -((v - lik.midpoint) ** 2) * inv
    mx = np.maximum(e1, e2)
    w1 = rho11 * np.exp(e1 - mx)
    w2 = (1.0 - rho11) * np.exp(e2 - mx)
    nn = w1 + w2
    coh = lik.coherence_factor * np.exp(e3 - mx) / nn
    return w1 / nn, coh


def state_given_v(state: QubitState, v: float, lik: GaussianLikelihood,
                  model: AmplifierModel) -> QubitState:
    """Exact conditioned state given the normalized amplified record.

    At zero amplifier noise this is the plain conditioned-state update; finite
    noise broadens the population discrimination without touching the
    coherence damping, so amplified readout loses information but adds no
    decoherence.
    """
    r, coh = _amplified_posterior(state.rho11, float(v), lik, model.referred_noise)
    return QubitState(float(r), state.rho12 * complex(coh))


def wv_with_amplifier(pps: PrePostSelection, lik: GaussianLikelihood,
                      model: AmplifierModel) -> float:
    """Closed-form post-selected mean of the normalized amplified record.

    The component records are Gaussians at the same centers with variance
    D + sigma^2; their first moments are the centers regardless of sigma, so
    the result coincides with the noiseless closed form.
    """
    a11, a22, cross = _overlap_moments(pps.psi_i.density(), pps.psi_f)
    gb = lik.coherence_factor
    # First moments of N(center, D + sigma^2) are the centers for any sigma.
    mean1, mean2, mean0 = lik.xbar1, lik.xbar2, lik.midpoint
    m2 = a11 + a22 + gb * cross
    if abs(m2) < 1e-14:
        raise DegenerateDenominator("post-selection weight vanished")
    return (mean1 * a11 + mean2 * a22 + mean0 * gb * cross) / m2


def _amp_block(args):
    """Draw order: branch uniforms, record normals, amplifier normals,
    acceptance uniforms."""
    (seed, block_index, start, size, n_total, r0, c0, f11, w12,
     xbar1, xbar2, D, gain, offset, noise_sigma) = args
    g = rng.block_stream(seed, rng.AMPLIFIER, block_index)
    u = g.random(size)
    nx = g.standard_normal(size)
    xi = g.standard_normal(size)
    ua = g.random(size)
    lik = GaussianLikelihood(xbar1, xbar2, D)
    model = AmplifierModel(gain, offset, noise_sigma)
    x = np.where(u < r0, xbar1, xbar2) + math.sqrt(D) * nx
    v_tilde = offset + gain * x + noise_sigma * xi
    v = (v_tilde - offset) / gain
    rt, coh = _amplified_posterior(r0, v, lik, model.referred_noise)
    p = selection_prob_arrays(rt, c0 * coh, f11, w12)
    accepted = ua < p
    bids = mc.batch_ids(start, size, n_total)
    return mc.BlockPartial.from_arrays(v, p, accepted, bids)


def mc_weak_value_amplified(
    pps: PrePostSelection,
    lik: GaussianLikelihood,
    model: AmplifierModel,
    n_traj: int,
    seed: int,
    mode: str = "both",
    workers: int | None = None,
) -> McWeakValue:
    """Monte Carlo average of the normalized amplified record.

    Samples the full chain: mixture record, amplification with added noise,
    normalization, conditioning on v. Raw means sit on wv_with_amplifier for
    any sigma; only the variance (and hence the errorbar) grows.
    """
    rho_i = pps.psi_i.density()
    f11, w12 = _selection_coeffs(pps.psi_f)
    args = [
        (seed, b, start, size, n_traj, rho_i.rho11, rho_i.rho12, f11, w12,
         lik.xbar1, lik.xbar2, lik.D, model.gain, model.offset, model.noise_sigma)
        for b, start, size in rng.iter_blocks(n_traj)
    ]
    parts = mc.run_blocks(_amp_block, args, workers)
    return finalize_mc(parts, n_traj, 0.5 * lik.separation, mode)
