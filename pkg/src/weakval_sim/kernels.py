"""Backend selection for the stepping kernels.

The compiled extension is preferred when importable; the numpy implementation
is the fallback and the reference for cross-checking. WEAKVAL_BACKEND forces
the choice: "compiled", "python", or "auto" (default).

Both backends share kernels_py.py's calling convention and clamp policy.
"""

from __future__ import annotations

import os

from . import kernels_py

_KERNEL_NAMES = (
    "evolve_generic",
    "mc_generic",
    "evolve_generic_traced",
    "evolve_cqed",
    "mc_cqed",
    "evolve_cqed_traced",
)


def _load(choice: str):
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(
            f"WEAKVAL_BACKEND must be 'auto', 'compiled' or 'python', got {choice!r}"
        )
    if choice == "python":
        return kernels_py, "python"
    try:
        from . import _stepping
    except ImportError:
        if choice == "compiled":
            raise ImportError(
                "WEAKVAL_BACKEND=compiled but the _stepping extension is not built"
            ) from None
        return kernels_py, "python"
    return _stepping, "compiled"


_impl, BACKEND = _load(os.environ.get("WEAKVAL_BACKEND", "auto"))

EULER = kernels_py.EULER
MILSTEIN = kernels_py.MILSTEIN
HEUN = kernels_py.HEUN
BAYES = kernels_py.BAYES
CLAMP_TOL = kernels_py.CLAMP_TOL

evolve_generic = _impl.evolve_generic
mc_generic = _impl.mc_generic
evolve_generic_traced = _impl.evolve_generic_traced
evolve_cqed = _impl.evolve_cqed
mc_cqed = _impl.mc_cqed
evolve_cqed_traced = _impl.evolve_cqed_traced


def backend_name() -> str:
    """Name of the backend in use ('compiled' or 'python')."""
    return BACKEND


def available_backends() -> dict:
    """Importable backends by name (for benchmarking and cross-checks)."""
    out = {"python": kernels_py}
    try:
        from . import _stepping
    except ImportError:
        pass
    else:
        out["compiled"] = _stepping
    return out
