"""Two-level conditioned-state primitives.

The package tracks a qubit density matrix through continuous weak measurement of
sigma_z. Trace preservation is structural: a state stores (rho11, rho12) and
derives rho22 = 1 - rho11, so no update can leak trace. Positivity is enforced
exactly for validated constructions and exact (Bayesian) updates; diffusive
integrator steps are allowed the transient purity overshoot of their own order
(see `trajectory`), with rho11 always clamped to [0, 1] under the tolerance
policy below.

Clamp policy: violations of rho11 bounds below ``CLAMP_TOL`` are rounding noise
and are silently clamped; anything larger is a logic or step-size error and
raises ``StateInvariantViolation``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import OrthogonalSelection, StateInvariantViolation

#: Slack allowed when *checking* the positivity inequality |rho12|^2 <= rho11 rho22.
POSITIVITY_TOL = 1e-12

#: Largest bound violation treated as rounding noise and clamped.
CLAMP_TOL = 1e-10


def _require_finite(name: str, *values: complex) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(f"{name} must be finite, got {v!r}")


def _clamp_unit_interval(value: float, name: str) -> float:
    """Clamp ``value`` into [0, 1] under the tolerance policy."""
    if 0.0 <= value <= 1.0:
        return value
    if -CLAMP_TOL <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + CLAMP_TOL:
        return 1.0
    raise StateInvariantViolation(f"{name} = {value!r} outside [0, 1] beyond tolerance")


@dataclass(frozen=True)
class PureState:
    """Normalized two-component state vector (c1, c2) in the sigma_z eigenbasis.

    Component 1 is the +1 eigenstate of sigma_z, component 2 the -1 eigenstate.
    Normalization is validated to 1e-12 at construction; use
    :meth:`from_unnormalized` to build from raw amplitudes.
    """

    c1: complex
    c2: complex

    def __post_init__(self):
        _require_finite("amplitude", complex(self.c1), complex(self.c2))
        norm = abs(self.c1) ** 2 + abs(self.c2) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state not normalized: |c1|^2 + |c2|^2 = {norm!r}")

    @classmethod
    def from_unnormalized(cls, c1: complex, c2: complex) -> "PureState":
        _require_finite("amplitude", complex(c1), complex(c2))
        norm = math.sqrt(abs(c1) ** 2 + abs(c2) ** 2)
        if norm == 0.0:
            raise ValueError("zero vector cannot be normalized")
        return cls(c1 / norm, c2 / norm)

    @classmethod
    def excited(cls) -> "PureState":
        return cls(1.0 + 0.0j, 0.0 + 0.0j)

    @classmethod
    def ground(cls) -> "PureState":
        return cls(0.0 + 0.0j, 1.0 + 0.0j)

    @classmethod
    def from_bloch(cls, theta: float, phi: float = 0.0) -> "PureState":
        """State at polar angle theta, azimuth phi on the Bloch sphere."""
        return cls(math.cos(theta / 2.0) + 0.0j, cmath.exp(1j * phi) * math.sin(theta / 2.0))

    def density(self) -> "QubitState":
        return QubitState(abs(self.c1) ** 2, self.c1 * self.c2.conjugate())

    def expect_z(self) -> float:
        return abs(self.c1) ** 2 - abs(self.c2) ** 2

    def vector(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=complex)


@dataclass(frozen=True)
class QubitState:
    """Qubit density matrix stored as (rho11, rho12) with rho22 = 1 - rho11.

    The constructor enforces finiteness and the rho11 clamp policy. The
    positivity inequality |rho12|^2 <= rho11 rho22 is *checked* via
    :meth:`require_positive`, which exact-update code paths and validated
    constructors call; integrator outputs are exempt by design (their
    transient overshoot is of the scheme's order, not a bug).
    """

    rho11: float
    rho12: complex

    def __post_init__(self):
        _require_finite("rho12", complex(self.rho12))
        if not math.isfinite(self.rho11):
            raise ValueError(f"rho11 must be finite, got {self.rho11!r}")
        object.__setattr__(self, "rho11", _clamp_unit_interval(float(self.rho11), "rho11"))
        object.__setattr__(self, "rho12", complex(self.rho12))

    @property
    def rho22(self) -> float:
        return 1.0 - self.rho11

    @property
    def expect_z(self) -> float:
        return self.rho11 - self.rho22

    @property
    def purity_gap(self) -> float:
        """rho11 rho22 - |rho12|^2; zero for pure states, positive for mixed."""
        return self.rho11 * self.rho22 - abs(self.rho12) ** 2

    def require_positive(self, tol: float = POSITIVITY_TOL) -> "QubitState":
        """Validate the positivity inequality, clamping sub-tolerance overshoot.

        Returns a state whose coherence has been scaled back onto the physical
        set when the overshoot is below ``CLAMP_TOL``; raises
        ``StateInvariantViolation`` for anything larger.
        """
        gap = self.purity_gap
        if gap >= -tol:
            return self
        if gap >= -CLAMP_TOL:
            bound = math.sqrt(max(self.rho11 * self.rho22, 0.0))
            scale = bound / abs(self.rho12)
            return QubitState(self.rho11, self.rho12 * scale)
        raise StateInvariantViolation(
            f"positivity violated: |rho12|^2 - rho11 rho22 = {-gap!r}"
        )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.rho11, self.rho12], [self.rho12.conjugate(), self.rho22]],
            dtype=complex,
        )

    @classmethod
    def maximally_mixed(cls) -> "QubitState":
        return cls(0.5, 0.0 + 0.0j)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "QubitState":
        m = np.asarray(m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError("expected a 2x2 matrix")
        if abs(m[0, 0].imag) > 1e-14 or abs(m[1, 1].imag) > 1e-14:
            raise ValueError("diagonal must be real")
        if abs(m[0, 0].real + m[1, 1].real - 1.0) > 1e-12:
            raise ValueError("trace must be 1")
        if abs(m[0, 1] - m[1, 0].conjugate()) > 1e-12:
            raise ValueError("matrix must be Hermitian")
        return cls(m[0, 0].real, m[0, 1]).require_positive()


@dataclass(frozen=True)
class QubitStateDelta:
    """Increment of a density matrix; traceless by construction (d22 = -d11)."""

    d11: float
    d12: complex

    @property
    def d22(self) -> float:
        return -self.d11

    def __add__(self, other: "QubitStateDelta") -> "QubitStateDelta":
        return QubitStateDelta(self.d11 + other.d11, self.d12 + other.d12)

    def norm(self) -> float:
        return math.sqrt(2.0 * self.d11**2 + 2.0 * abs(self.d12) ** 2)


@dataclass(frozen=True)
class PrePostSelection:
    """Pre-selected initial state and post-selected final state."""

    psi_i: PureState
    psi_f: PureState

    @property
    def overlap(self) -> complex:
        """<psi_f | psi_i>; may be arbitrarily small, zero only if exactly zero."""
        return (
            self.psi_f.c1.conjugate() * self.psi_i.c1
            + self.psi_f.c2.conjugate() * self.psi_i.c2
        )


@dataclass(frozen=True)
class AavWeakValue:
    """Linear-response weak value <psi_f|sigma_z|psi_i> / <psi_f|psi_i>."""

    w: complex

    @property
    def re(self) -> float:
        return self.w.real

    @property
    def im(self) -> float:
        return self.w.imag

    @property
    def abs2(self) -> float:
        return self.w.real**2 + self.w.imag**2


def aav_weak_value(pps: PrePostSelection) -> AavWeakValue:
    """Weak value of sigma_z for the given pre/post-selection.

    Raises
    ------
    OrthogonalSelection
        If the selection overlap is exactly zero (the weak value has a pole).
    """
    den = pps.overlap
    if den == 0:
        raise OrthogonalSelection("pre- and post-selection are exactly orthogonal")
    num = (
        pps.psi_f.c1.conjugate() * pps.psi_i.c1
        - pps.psi_f.c2.conjugate() * pps.psi_i.c2
    )
    return AavWeakValue(num / den)


def superop_d(state: QubitState) -> QubitStateDelta:
    """Dissipator D[sigma_z]rho = sigma_z rho sigma_z - rho (pure dephasing)."""
    return QubitStateDelta(0.0, -2.0 * state.rho12)


def superop_h(state: QubitState) -> QubitStateDelta:
    """Unraveling superoperator H[sigma_z]rho = sigma_z rho + rho sigma_z - 2<sigma_z>rho."""
    z = state.expect_z
    return QubitStateDelta(2.0 * state.rho11 * (1.0 - z), -2.0 * z * state.rho12)


def superop_m(state: QubitState) -> QubitStateDelta:
    """Symmetrized measurement superoperator, M = H / 2."""
    z = state.expect_z
    return QubitStateDelta(state.rho11 * (1.0 - z), -z * state.rho12)


def selection_probability(state: QubitState, psi_f: PureState, clip: bool = True) -> float:
    """<psi_f| rho |psi_f>, the post-selection success probability.

    Integrator outputs can overshoot the physical set by their scheme order,
    so the result is clipped into [0, 1] by default.
    """
    f11 = abs(psi_f.c1) ** 2
    rho_f12 = psi_f.c1 * psi_f.c2.conjugate()
    p = f11 * state.rho11 + (1.0 - f11) * state.rho22
    p += 2.0 * (rho_f12.conjugate() * state.rho12).real
    if clip:
        p = min(max(p, 0.0), 1.0)
    return p


def fidelity(a: PureState, b: PureState) -> float:
    """|<a|b>|^2, insensitive to global phase."""
    ov = a.c1.conjugate() * b.c1 + a.c2.conjugate() * b.c2
    return abs(ov) ** 2
