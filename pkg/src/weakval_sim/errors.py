"""Exception and warning types shared across the package."""

from __future__ import annotations


class WeakvalError(Exception):
    """Base class for all errors raised by weakval_sim."""


class OrthogonalSelection(WeakvalError):
    """Pre- and post-selection overlap is exactly zero; the weak value is undefined."""


class StateInvariantViolation(WeakvalError):
    """A state update left the physical state space by more than the clamp tolerance."""


class ZeroLikelihood(WeakvalError):
    """Readout value so far in the tails that every likelihood branch underflows.

    Signals a record/parameter mismatch rather than a numerical edge case.
    """


class ExpansionDiverged(WeakvalError):
    """Small-response expansion evaluated outside its radius of convergence."""


class DegenerateDenominator(WeakvalError):
    """Post-selection weight vanished; the conditioned average is undefined."""


class NoSelections(WeakvalError):
    """Rejection sampling retained too few trajectories for a meaningful estimate."""

    def __init__(self, n_selected: int, n_total: int):
        self.n_selected = n_selected
        self.n_total = n_total
        self.success_rate = n_selected / n_total if n_total else 0.0
        super().__init__(
            f"only {n_selected} of {n_total} trajectories were post-selected "
            f"(success rate {self.success_rate:.3g}); at least 100 are required"
        )


class NoConvergence(WeakvalError):
    """Iterative scheme failed to converge within the iteration budget."""


class ConfigError(WeakvalError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message)

    def render(self, path: str) -> str:
        loc = f"{path}:{self.line}" if self.line else path
        return f"{loc}: error: {self}"


class StepSizeWarning(UserWarning):
    """Integrator step too coarse for the requested measurement rate."""


class BadCavityWarning(UserWarning):
    """Dispersive-readout parameters outside the validity of the bad-cavity limit."""


class DenominatorWarning(UserWarning):
    """Short-time denominator correction is not small; result is first-order only."""
