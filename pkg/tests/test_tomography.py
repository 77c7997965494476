"""Two-quadrature state reconstruction from post-selected averages."""

import math

import pytest

from weakval_sim.cqed import (
    CqedParams,
    CqedRates,
    rates,
    steady_fields,
    tomography,
    wv_cqed_finite,
)
from weakval_sim.core import PrePostSelection, PureState, fidelity
from weakval_sim.errors import NoConvergence

PARAMS = CqedParams(0.3, 10.0, 2.0, delta_r=0.9, omega_q=1.1)
FIELDS = steady_fields(PARAMS)
R_INFO = rates(FIELDS, PARAMS, phi=FIELDS.theta_beta)
R_BACK = rates(FIELDS, PARAMS, phi=FIELDS.theta_beta + math.pi / 2.0)
PSI_F = PureState.from_bloch(2.0, 0.4)
T_M = 1e-3 / R_INFO.gamma_d_total


def protocol_values(psi_i: PureState, purity: float = 1.0):
    pps = PrePostSelection(psi_i, PSI_F)
    vi = wv_cqed_finite(pps, R_INFO, T_M, purity).value
    vb = wv_cqed_finite(pps, R_BACK, T_M, purity).value
    return vi, vb


def test_post_selection_must_touch_both_basis_states():
    with pytest.raises(ValueError, match="both basis states"):
        tomography(PureState(1.0 + 0.0j, 0.0j), 0.1, 0.1, R_INFO, T_M)


def test_readout_rate_must_be_positive():
    with pytest.raises(ValueError, match="must be positive"):
        tomography(PSI_F, 0.1, 0.1, CqedRates(0.0, 0.0, 0.0, 0.0, 0.0), T_M)


@pytest.mark.parametrize("purity", [1.0, 0.85])
def test_round_trip_recovers_the_preparation(purity):
    psi_i = PureState.from_bloch(1.2, 0.7)
    vi, vb = protocol_values(psi_i, purity)
    res = tomography(PSI_F, vi, vb, R_INFO, T_M, purity)
    assert not res.singular
    assert res.iterations <= 10
    assert 1.0 - fidelity(res.state, psi_i) < 1e-9
    # the converged weak value is the one behind the generated averages
    w_true = wv_cqed_finite(PrePostSelection(psi_i, PSI_F), R_INFO, T_M, purity).w_mod
    assert abs(res.w_mod - w_true) < 1e-9


def test_rotating_frame_phase_is_undone():
    """With omega_tilde t_m of order one the raw ratio acquires a large
    phase that the reconstruction must strip."""
    p2 = CqedParams(0.3, 10.0, 2.0, delta_r=0.9, omega_q=40.0)
    f2 = steady_fields(p2)
    ri = rates(f2, p2, phi=f2.theta_beta)
    rb = rates(f2, p2, phi=f2.theta_beta + math.pi / 2.0)
    assert abs(ri.omega_tilde) * T_M > 1.0
    psi_i = PureState.from_bloch(0.9, -1.3)
    pps = PrePostSelection(psi_i, PSI_F)
    vi = wv_cqed_finite(pps, ri, T_M).value
    vb = wv_cqed_finite(pps, rb, T_M).value
    res = tomography(PSI_F, vi, vb, ri, T_M)
    assert 1.0 - fidelity(res.state, psi_i) < 1e-9


def test_prepared_excited_state_is_flagged_singular():
    vi, vb = protocol_values(PureState(1.0 + 0.0j, 0.0j))
    assert abs(vb) < 1e-12  # no coherence, no back-action signal
    res = tomography(PSI_F, vi, vb, R_INFO, T_M)
    assert res.singular
    assert res.state.c1 == 1.0 + 0.0j
    assert res.state.c2 == 0.0j
    assert res.w_mod == pytest.approx(1.0 + 0.0j, abs=1e-12)


def test_saturated_averages_raise():
    r = CqedRates(1.61, 1.61, 1.61, 0.0, 0.0)
    e1 = math.sqrt(r.kappa_beta2)
    # fixed-point equation 0.8 w^2 - w + 1.2 = 0 has no real root
    with pytest.raises(NoConvergence, match="saturation"):
        tomography(PSI_F, -2.0 * e1, 0.0, r, 1.0)
