"""Stochastic trajectories of a continuously z-monitored qubit.

The conditioned state obeys the Ito equation (unit-efficiency detection,
record normalized to unit shot-noise density)

    d(rho11) = 2 sqrt(gamma) (1 - z) rho11 dW,
    d(rho12) = -2 rho12 (gamma dt + sqrt(gamma) z dW),     z = 2 rho11 - 1,

with record increment x = 2 sqrt(gamma) z dt + dW. Four integrators are
provided: Euler and Milstein in Ito form, a Heun predictor-corrector for the
equivalent Stratonovich form, and the exact per-step Bayes map, which is the
reference the others converge to. Scalar single-step functions live here for
clarity and testing; batched evolution goes through the kernels module.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels, mc, rng
from .core import QubitState, QubitStateDelta
from .errors import StateInvariantViolation, StepSizeWarning

STEP_KICK_LIMIT = 0.2


@dataclass(frozen=True)
class MeasurementStrength:
    """Measurement rate gamma, integrator step, and total record window.

    The derived quantities fix the conventions used throughout: the window
    response epsilon = 2 sqrt(gamma) t_total, record variance D = t_total,
    dimensionless strength g = gamma * t_total, ensemble coherence survival
    exp(-2g), and the saturating strength (1 - exp(-2g)) / 2 that replaces g
    beyond the linear regime.
    """

    gamma: float
    dt_step: float
    t_total: float

    def __post_init__(self):
        if not (self.gamma > 0.0):
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if not (0.0 < self.dt_step <= self.t_total):
            raise ValueError("need 0 < dt_step <= t_total")
        n = self.t_total / self.dt_step
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError("t_total must be an integer multiple of dt_step")

    @property
    def n_steps(self) -> int:
        return round(self.t_total / self.dt_step)

    @property
    def epsilon(self) -> float:
        return 2.0 * math.sqrt(self.gamma) * self.t_total

    @property
    def variance(self) -> float:
        return self.t_total

    @property
    def g(self) -> float:
        return self.gamma * self.t_total

    @property
    def coherence_factor(self) -> float:
        return math.exp(-2.0 * self.g)

    @property
    def effective_strength(self) -> float:
        return 0.5 * (1.0 - math.exp(-2.0 * self.g))

    @property
    def step_epsilon(self) -> float:
        return 2.0 * math.sqrt(self.gamma) * self.dt_step

    @property
    def step_kick(self) -> float:
        return 4.0 * math.sqrt(self.gamma * self.dt_step)

    def step_likelihood(self):
        from .bayes import GaussianLikelihood

        return GaussianLikelihood(self.step_epsilon, -self.step_epsilon, self.dt_step)

    def window_likelihood(self):
        from .bayes import GaussianLikelihood

        return GaussianLikelihood(self.epsilon, -self.epsilon, self.t_total)

    def warn_if_coarse(self, stepper: "Stepper") -> None:
        """Approximate steppers need small per-step kicks; the exact map does not."""
        if stepper is not Stepper.BAYES_EXACT and self.step_kick > STEP_KICK_LIMIT:
            warnings.warn(
                f"4 sqrt(gamma dt) = {self.step_kick:.3g} exceeds {STEP_KICK_LIMIT}; "
                f"per-step population kicks are not small for {stepper.value}",
                StepSizeWarning,
                stacklevel=3,
            )

    @classmethod
    def from_g(cls, g: float, gamma: float = 1.0, n_steps: int = 1) -> "MeasurementStrength":
        """Strength g at a given rate, split into n_steps equal steps."""
        t_total = g / gamma
        return cls(gamma, t_total / n_steps, t_total)


@dataclass(frozen=True)
class DetectorCalibration:
    """Raw-current calibration: offset i0, response delta_i, shot noise density s0."""

    i0: float
    delta_i: float
    s0: float

    def __post_init__(self):
        if not (self.s0 > 0.0):
            raise ValueError("shot noise density must be positive")
        if self.delta_i == 0.0:
            raise ValueError("detector response delta_i must be nonzero")

    @property
    def gamma(self) -> float:
        """Measurement rate implied by the calibration: delta_i^2 / (8 s0)."""
        return self.delta_i**2 / (8.0 * self.s0)


def normalize_current(raw, cal: DetectorCalibration):
    """Map a raw current to the unit-shot-noise record: (I - i0) / sqrt(s0 / 2)."""
    return (raw - cal.i0) / math.sqrt(cal.s0 / 2.0)


class Stepper(Enum):
    """Trajectory integration schemes (value doubles as the config token)."""

    ITO_EULER = "ito-euler"
    ITO_MILSTEIN = "ito-milstein"
    STRAT_HEUN = "stratonovich"
    BAYES_EXACT = "bayes-exact"

    @property
    def code(self) -> int:
        return _STEPPER_CODES[self]

    @classmethod
    def from_token(cls, token: str) -> "Stepper":
        for s in cls:
            if s.value == token:
                return s
        valid = ", ".join(s.value for s in cls)
        raise ValueError(f"unknown stepper {token!r} (expected one of: {valid})")


_STEPPER_CODES = {
    Stepper.ITO_EULER: kernels.EULER,
    Stepper.ITO_MILSTEIN: kernels.MILSTEIN,
    Stepper.STRAT_HEUN: kernels.HEUN,
    Stepper.BAYES_EXACT: kernels.BAYES,
}


def sample_output(state: QubitState, ms: MeasurementStrength, dW: float) -> float:
    """Record increment for one step given the Wiener increment."""
    return 2.0 * math.sqrt(ms.gamma) * state.expect_z * ms.dt_step + dW


def step_ito_euler(state: QubitState, ms: MeasurementStrength, dW: float) -> QubitState:
    gamma, dt = ms.gamma, ms.dt_step
    sq = math.sqrt(gamma)
    z = state.expect_z
    dn = 2.0 * sq * dW
    r = state.rho11 + (1.0 - z) * state.rho11 * dn
    f = 1.0 - 2.0 * gamma * dt - z * dn
    return QubitState(r, state.rho12 * f)


def step_ito_milstein(state: QubitState, ms: MeasurementStrength, dW: float) -> QubitState:
    """Euler plus the (dW^2 - dt) corrections that lift strong order to 1."""
    gamma, dt = ms.gamma, ms.dt_step
    sq = math.sqrt(gamma)
    z = state.expect_z
    rs = state.rho11 * (1.0 - state.rho11)
    q = dW * dW - dt
    r = state.rho11 + 4.0 * sq * rs * dW - 8.0 * gamma * rs * z * q
    f = 1.0 - 2.0 * gamma * dt - 2.0 * sq * z * dW + 2.0 * gamma * (2.0 * z * z - 1.0) * q
    return QubitState(r, state.rho12 * f)


def _strat_drift(rho11: float, rho12: complex, gamma: float):
    z = 2.0 * rho11 - 1.0
    rs = rho11 * (1.0 - rho11)
    return 8.0 * gamma * z * rs, -4.0 * gamma * z * z * rho12


def _diffusion(rho11: float, rho12: complex, gamma: float):
    z = 2.0 * rho11 - 1.0
    sq = math.sqrt(gamma)
    return 4.0 * sq * rho11 * (1.0 - rho11), -2.0 * sq * z * rho12


def step_stratonovich(state: QubitState, ms: MeasurementStrength, dW: float) -> QubitState:
    """Heun step of the Stratonovich form (midpoint-rule stochastic integral)."""
    gamma, dt = ms.gamma, ms.dt_step
    r0, c0 = state.rho11, state.rho12
    a0r, a0c = _strat_drift(r0, c0, gamma)
    b0r, b0c = _diffusion(r0, c0, gamma)
    rp = r0 + a0r * dt + b0r * dW
    cp = c0 + a0c * dt + b0c * dW
    apr, apc = _strat_drift(rp, cp, gamma)
    bpr, bpc = _diffusion(rp, cp, gamma)
    r = r0 + 0.5 * ((a0r + apr) * dt + (b0r + bpr) * dW)
    c = c0 + 0.5 * ((a0c + apc) * dt + (b0c + bpc) * dW)
    return QubitState(r, c)


_SCALAR_STEPS = {
    Stepper.ITO_EULER: step_ito_euler,
    Stepper.ITO_MILSTEIN: step_ito_milstein,
    Stepper.STRAT_HEUN: step_stratonovich,
}


def scalar_step(state: QubitState, ms: MeasurementStrength, dW: float, stepper: Stepper):
    if stepper is Stepper.BAYES_EXACT:
        from .bayes import bayes_update

        x = sample_output(state, ms, dW)
        return bayes_update(state, x, ms.step_likelihood())
    return _SCALAR_STEPS[stepper](state, ms, dW)


@dataclass(frozen=True)
class DriftComparison:
    """Per-unit-time drifts: Stratonovich form, conversion term, and Ito form."""

    stratonovich: QubitStateDelta
    correction: QubitStateDelta
    ito: QubitStateDelta

    @property
    def converted(self) -> QubitStateDelta:
        return self.stratonovich + self.correction


def ito_conversion_check(state: QubitState, gamma: float) -> DriftComparison:
    """Drift bookkeeping between the two calculi at a given state.

    The conversion term is (1/2) sum_j b_j d(b_i)/d(x_j) over all three state
    components; the population drift cancels exactly while the coherence picks
    up 2 gamma (2 z^2 - 1) rho12, turning the Stratonovich -4 gamma z^2 rho12
    into the Ito -2 gamma rho12.
    """
    r = state.rho11
    c = state.rho12
    z = state.expect_z
    rs = r * (1.0 - r)
    strat = QubitStateDelta(8.0 * gamma * z * rs, -4.0 * gamma * z * z * c)
    corr = QubitStateDelta(-8.0 * gamma * z * rs, 2.0 * gamma * (2.0 * z * z - 1.0) * c)
    ito = QubitStateDelta(0.0, -2.0 * gamma * c)
    return DriftComparison(strat, corr, ito)


def _state_arrays(state: QubitState, n: int):
    r = np.full(n, state.rho11)
    cre = np.full(n, state.rho12.real)
    cim = np.full(n, state.rho12.imag)
    return r, cre, cim


def _raise_if_bad(status: int, stepper: Stepper, dt: float):
    if status:
        raise StateInvariantViolation(
            f"{stepper.value} step left [0, 1] by more than {kernels.CLAMP_TOL} "
            f"at dt={dt!r}; reduce the step"
        )


@dataclass
class TrajectoryRecord:
    """Full sample paths for a (small) batch of trajectories."""

    stepper: Stepper
    gamma: float
    dt: float
    seed: int
    x: np.ndarray  # (steps, n) per-step records
    rho11: np.ndarray  # (steps + 1, n) including the initial state
    rho12: np.ndarray  # (steps + 1, n) complex

    @property
    def n_traj(self) -> int:
        return self.x.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.rho11.shape[0])


def generate_trajectories(
    state0: QubitState,
    ms: MeasurementStrength,
    stepper: Stepper,
    n_traj: int,
    seed: int,
) -> TrajectoryRecord:
    """Simulate and keep every step (memory scales as steps * n_traj).

    Noise panels follow the standard block layout, so trajectory i here sees
    the same noise as trajectory i of the ensemble drivers under the same
    seed. Records are the physical outputs x, not the innovations.
    """
    if n_traj > rng.BLOCK:
        raise ValueError(f"path recording is limited to {rng.BLOCK} trajectories")
    ms.warn_if_coarse(stepper)
    steps = ms.n_steps
    r, cre, cim = _state_arrays(state0, n_traj)
    xh = np.empty((steps, n_traj))
    rh = np.empty((steps + 1, n_traj))
    ch = np.empty((steps + 1, n_traj), dtype=np.complex128)
    rh[0] = r
    ch[0] = cre + 1j * cim
    g = rng.block_stream(seed, rng.TRAJECTORY, 0)
    xbuf = np.zeros(n_traj)
    done = 0
    while done < steps:
        cs = min(rng.STEP_CHUNK, steps - done)
        normals = g.standard_normal((cs, n_traj))
        for k in range(cs):
            xbuf[:] = 0.0
            status = kernels.evolve_generic(
                stepper.code, r, cre, cim, ms.gamma, ms.dt_step, normals[k : k + 1], xbuf
            )
            _raise_if_bad(status, stepper, ms.dt_step)
            i = done + k
            xh[i] = xbuf
            rh[i + 1] = r
            ch[i + 1] = cre + 1j * cim
        done += cs
    return TrajectoryRecord(stepper, ms.gamma, ms.dt_step, seed, xh, rh, ch)


def write_trajectories_csv(rec: TrajectoryRecord, path) -> None:
    """One row per (trajectory, step): record and post-step state."""
    steps, n = rec.x.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\n")
        fh.write(f"# stepper={rec.stepper.value} gamma={rec.gamma:.17g} dt={rec.dt:.17g} seed={rec.seed}\n")
        fh.write("trajectory,step,t,x,rho11,re_rho12,im_rho12\n")
        for j in range(n):
            for k in range(steps):
                c = rec.rho12[k + 1, j]
                fh.write(
                    f"{j},{k},{(k + 1) * rec.dt:.17g},{rec.x[k, j]:.17g},"
                    f"{rec.rho11[k + 1, j]:.17g},{c.real:.17g},{c.imag:.17g}\n"
                )


@dataclass
class EnsembleTrace:
    """Per-step ensemble means of the conditioned state."""

    times: np.ndarray
    rho11: np.ndarray
    rho12: np.ndarray  # complex
    n_traj: int


def _traced_block(args):
    (seed, block_index, size, code, r0, c0re, c0im, gamma, dt, steps) = args
    g = rng.block_stream(seed, rng.TRAJECTORY, block_index)
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
        status = kernels.evolve_generic_traced(
            code, r, cre, cim, gamma, dt, normals,
            sum_r[done : done + cs], sum_cre[done : done + cs], sum_cim[done : done + cs],
        )
        if status:
            return None
        done += cs
    return sum_r, sum_cre, sum_cim


def ensemble_coherence(
    state0: QubitState,
    ms: MeasurementStrength,
    stepper: Stepper,
    n_traj: int,
    seed: int,
    workers: int | None = None,
) -> EnsembleTrace:
    """Ensemble-averaged state vs time; the coherence decays as exp(-2 gamma t)."""
    ms.warn_if_coarse(stepper)
    steps = ms.n_steps
    args = [
        (seed, b, size, stepper.code, state0.rho11, state0.rho12.real, state0.rho12.imag,
         ms.gamma, ms.dt_step, steps)
        for b, _start, size in rng.iter_blocks(n_traj)
    ]
    parts = mc.run_blocks(_traced_block, args, workers)
    sum_r = np.zeros(steps)
    sum_cre = np.zeros(steps)
    sum_cim = np.zeros(steps)
    for p in parts:
        if p is None:
            _raise_if_bad(1, stepper, ms.dt_step)
        sum_r += p[0]
        sum_cre += p[1]
        sum_cim += p[2]
    times = ms.dt_step * np.arange(steps + 1)
    mean_r = np.concatenate(([state0.rho11], sum_r / n_traj))
    mean_c = np.concatenate(([state0.rho12], (sum_cre + 1j * sum_cim) / n_traj))
    return EnsembleTrace(times, mean_r, mean_c, n_traj)


def fit_dephasing_rate(trace: EnsembleTrace, floor: float = 1e-12) -> float:
    """Decay rate of |mean rho12| by least squares on the log, ignoring the noise floor."""
    mag = np.abs(trace.rho12)
    mask = mag > floor
    if np.count_nonzero(mask) < 2:
        raise ValueError("coherence trace is entirely below the fit floor")
    slope = np.polyfit(trace.times[mask], np.log(mag[mask]), 1)[0]
    return -float(slope)


def _convergence_block(args):
    (seed, block_index, size, codes, r0, c0re, c0im, gamma, dt, steps) = args
    g = rng.block_stream(seed, rng.CONVERGENCE, block_index)
    states = {c: (np.full(size, r0), np.full(size, c0re), np.full(size, c0im)) for c in codes}
    ref = (np.full(size, r0), np.full(size, c0re), np.full(size, c0im))
    done = 0
    while done < steps:
        cs = min(rng.STEP_CHUNK, steps - done)
        normals = g.standard_normal((cs, size))
        for c, (r, cre, cim) in states.items():
            if kernels.evolve_generic(c, r, cre, cim, gamma, dt, normals):
                return None
        if kernels.evolve_generic(kernels.BAYES, ref[0], ref[1], ref[2], gamma, dt, normals):
            return None
        done += cs
    out = {}
    for c, (r, cre, cim) in states.items():
        d2 = (r - ref[0]) ** 2 + (cre - ref[1]) ** 2 + (cim - ref[2]) ** 2
        out[c] = float(np.add.reduce(d2))
    return out


def strong_convergence_errors(
    state0: QubitState,
    gamma: float,
    t_total: float,
    dts,
    n_paths: int,
    seed: int,
    steppers=(Stepper.ITO_EULER, Stepper.ITO_MILSTEIN),
    workers: int | None = None,
) -> dict:
    """RMS endpoint error of each stepper against the exact Bayes chain.

    Reference and stepper share every Wiener increment (the Bayes chain is
    evaluated at the same step size, so this measures pure scheme error).
    Returns {stepper: array of rms errors aligned with dts}.
    """
    codes = tuple(s.code for s in steppers)
    out = {s: np.empty(len(dts)) for s in steppers}
    for i, dt in enumerate(dts):
        steps = round(t_total / dt)
        if abs(steps * dt - t_total) > 1e-9 * t_total:
            raise ValueError(f"t_total is not a multiple of dt={dt!r}")
        args = [
            (seed + i, b, size, codes, state0.rho11, state0.rho12.real, state0.rho12.imag,
             gamma, dt, steps)
            for b, _start, size in rng.iter_blocks(n_paths)
        ]
        parts = mc.run_blocks(_convergence_block, args, workers)
        for s, c in zip(steppers, codes):
            total = 0.0
            for p in parts:
                if p is None:
                    _raise_if_bad(1, s, dt)
                total += p[c]
            out[s][i] = math.sqrt(total / n_paths)
    return out


def fit_loglog_slope(dts, errors) -> float:
    """Least-squares slope of log(error) vs log(dt)."""
    return float(np.polyfit(np.log(np.asarray(dts, dtype=float)), np.log(np.asarray(errors, dtype=float)), 1)[0])
