"""Dispersive homodyne readout: fields, rates, conditioned updates, averages."""

import math
import warnings

import numpy as np
import pytest

from weakval_sim.cqed import (
    CavityFields,
    CqedParams,
    CqedRates,
    bayes_cqed,
    ensemble_coherence_cqed,
    mc_weak_value_cqed,
    modified_weak_value,
    rates,
    sample_cqed_output,
    steady_fields,
    step_cqed_qte,
    wv_cqed_finite,
    wv_cqed_short,
)
from weakval_sim.core import (
    PrePostSelection,
    PureState,
    QubitState,
    aav_weak_value,
    selection_probability,
)
from weakval_sim.errors import BadCavityWarning, DenominatorWarning
from weakval_sim.trajectory import fit_dephasing_rate

PARAMS = CqedParams(0.3, 10.0, 4.0, delta_r=1.3, omega_q=0.8)
FIELDS = steady_fields(PARAMS)
PPS = PrePostSelection(PureState.from_bloch(1.2, 0.7), PureState.from_bloch(2.0, 0.4))


def off_axis_rates(dphi: float = 0.6) -> CqedRates:
    return rates(FIELDS, PARAMS, phi=FIELDS.theta_beta + dphi)


def test_params_validation():
    with pytest.raises(ValueError, match="kappa"):
        CqedParams(0.1, 0.0, 1.0)
    with pytest.raises(ValueError, match="purity"):
        CqedParams(0.1, 10.0, 1.0, purity=0.0)
    with pytest.raises(ValueError, match="purity"):
        CqedParams(0.1, 10.0, 1.0, purity=1.2)
    with pytest.raises(ValueError, match="omega_convention"):
        CqedParams(0.1, 10.0, 1.0, omega_convention="lab")


def test_bad_cavity_warning_threshold():
    with pytest.warns(BadCavityWarning, match="adiabatic"):
        CqedParams(5.0, 10.0, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        CqedParams(0.3, 10.0, 3.0)


def test_steady_fields_solve_the_cavity_equations():
    for alpha, shift in ((FIELDS.alpha1, PARAMS.chi), (FIELDS.alpha2, -PARAMS.chi)):
        residual = (-1j * (PARAMS.delta_r + shift) + 0.5 * PARAMS.kappa) * alpha + 1j * PARAMS.eps_m
        assert abs(residual) < 1e-12 * abs(PARAMS.eps_m)
    assert FIELDS.beta == FIELDS.alpha2 - FIELDS.alpha1
    assert FIELDS.nbar == pytest.approx(0.5 * (abs(FIELDS.alpha1) ** 2 + abs(FIELDS.alpha2) ** 2))


def test_signal_quadrature_angle_and_rate_split():
    th = FIELDS.theta_beta
    assert -math.pi / 2.0 < th <= math.pi / 2.0
    on_axis = rates(FIELDS, PARAMS, phi=th)
    assert on_axis.gamma_ba == pytest.approx(0.0, abs=1e-25)
    assert on_axis.gamma_ci == pytest.approx(on_axis.kappa_beta2, rel=1e-12)
    for dphi in (0.3, 0.9, 2.0, -0.7):
        r = off_axis_rates(dphi)
        assert r.gamma_ci + r.gamma_ba == pytest.approx(
            PARAMS.kappa * FIELDS.abs_beta**2, rel=1e-12
        )
        # for steady driving the ensemble dephasing saturates the record bound
        assert r.gamma_d == pytest.approx(r.gamma_d_total, rel=1e-12)


def test_omega_conventions_differ_by_chi():
    disp = CqedParams(0.3, 10.0, 4.0, delta_r=1.3, omega_q=0.8, omega_convention="dispersive")
    r_bare = rates(FIELDS, PARAMS)
    r_disp = rates(steady_fields(disp), disp)
    assert r_disp.omega_tilde - r_bare.omega_tilde == pytest.approx(PARAMS.chi, rel=1e-12)
    assert r_bare.omega_tilde == pytest.approx(PARAMS.omega_q + r_bare.ac_stark, rel=1e-12)


def test_record_convention_and_single_step():
    r = off_axis_rates()
    state = QubitState(0.62, 0.21 + 0.13j)
    dt, dW = 1e-3, 0.02
    assert sample_cqed_output(state, r, dt, dW) == pytest.approx(
        -math.sqrt(r.gamma_ci) * state.expect_z * dt + dW, rel=1e-15
    )
    from weakval_sim.kernels import evolve_cqed

    stepped = step_cqed_qte(state, r, dt, dW)
    rr = np.array([state.rho11])
    cre = np.array([state.rho12.real])
    cim = np.array([state.rho12.imag])
    assert evolve_cqed(
        rr, cre, cim, r.gamma_ci, r.gamma_ba, r.gamma_d, r.omega_tilde, dt,
        np.array([[dW / math.sqrt(dt)]]),
    ) == 0
    assert rr[0] == pytest.approx(stepped.rho11, rel=1e-13)
    assert complex(cre[0], cim[0]) == pytest.approx(stepped.rho12, rel=1e-13)


class TestConditionedUpdate:
    def test_window_validation(self):
        with pytest.raises(ValueError, match="t_m"):
            bayes_cqed(QubitState(0.5, 0.2 + 0.0j), 0.1, off_axis_rates(), 0.0)

    def test_windows_compose(self):
        r = off_axis_rates()
        state = QubitState(0.35, 0.22 - 0.14j)
        t_m = 0.6
        for x1, x2 in ((0.2, -0.5), (1.0, 0.8), (-1.3, 0.4)):
            step = bayes_cqed(bayes_cqed(state, x1, r, 0.5 * t_m), x2, r, 0.5 * t_m)
            whole = bayes_cqed(state, x1 + x2, r, t_m)
            assert step.rho11 == pytest.approx(whole.rho11, abs=1e-12)
            assert step.rho12 == pytest.approx(whole.rho12, abs=1e-12)

    def test_purity_scales_the_coherence_only(self):
        r = off_axis_rates()
        state = QubitState(0.35, 0.22 - 0.14j)
        full = bayes_cqed(state, 0.4, r, 0.6)
        damped = bayes_cqed(state, 0.4, r, 0.6, purity=0.85)
        assert damped.rho11 == full.rho11
        assert damped.rho12 == pytest.approx(0.85 * full.rho12, rel=1e-15)

    def test_poles_are_fixed_points(self):
        r = off_axis_rates()
        for pole in (QubitState(1.0, 0.0j), QubitState(0.0, 0.0j)):
            post = bayes_cqed(pole, -0.7, r, 0.4)
            assert post.rho11 == pole.rho11
            assert post.rho12 == 0.0j


def test_modified_weak_value_reduces_to_linear_response():
    plain = aav_weak_value(PPS)
    assert modified_weak_value(PPS, 0.0, 0.7).w == plain.w
    rotated = modified_weak_value(PPS, 1.3, 0.7)
    assert rotated.w != plain.w


class TestFiniteWindow:
    def test_quadrature_oracle(self):
        """E[x p_sel] / E[p_sel] over the exact record mixture, via
        Gauss-Hermite against each component; independent of the moment
        algebra behind the closed form."""
        r = off_axis_rates()
        t_m = 0.8
        fin = wv_cqed_finite(PPS, r, t_m)
        rho_i = PPS.psi_i.density()
        s_ci = math.sqrt(r.gamma_ci)
        nodes, wts = np.polynomial.hermite.hermgauss(80)
        m1 = m2 = 0.0
        for wgt, center in ((rho_i.rho11, -s_ci * t_m), (rho_i.rho22, s_ci * t_m)):
            for t, wk in zip(nodes, wts):
                x = center + math.sqrt(2.0 * t_m) * t
                p_sel = selection_probability(bayes_cqed(rho_i, x, r, t_m), PPS.psi_f)
                m1 += wgt * wk / math.sqrt(math.pi) * x * p_sel
                m2 += wgt * wk / math.sqrt(math.pi) * p_sel
        assert fin.value == pytest.approx(m1 / m2, abs=1e-12)

    def test_moment_and_compact_routes_agree(self):
        r = off_axis_rates()
        fin = wv_cqed_finite(PPS, r, 0.8)
        assert fin.value == fin.from_moments
        assert fin.from_modified == pytest.approx(fin.value, abs=1e-12)

    def test_window_validation(self):
        with pytest.raises(ValueError, match="t_m"):
            wv_cqed_finite(PPS, off_axis_rates(), -0.1)


class TestShortWindow:
    def test_error_is_first_order_in_the_window(self):
        r = off_axis_rates()
        t0 = 1e-3 / max(abs(r.omega_tilde), r.kappa_beta2)

        def rel_err(tm):
            fin = wv_cqed_finite(PPS, r, tm).value
            return abs(wv_cqed_short(PPS, r, tm) - fin) / abs(fin)

        assert rel_err(t0) < 5e-3
        ratio = rel_err(t0) / rel_err(0.5 * t0)
        assert 1.7 < ratio < 2.3

    def test_large_correction_warns(self):
        w = aav_weak_value(PPS)
        assert abs(w.im) > 0.05
        t_m = 0.5
        r = CqedRates(0.4, 0.1, 0.25, 0.0, 1.2 / (w.im * t_m))
        with pytest.warns(DenominatorWarning, match="finite-window"):
            wv_cqed_short(PPS, r, t_m)


class TestMonteCarlo:
    def test_single_shot_matches_the_closed_form(self):
        r = off_axis_rates()
        t_m = 0.8
        res = mc_weak_value_cqed(PPS, r, t_m, 30000, 19)
        fin = wv_cqed_finite(PPS, r, t_m).value
        assert abs(res.weighted.mean - fin) < 5.0 * res.weighted.std_error
        assert abs(res.rejection.mean - fin) < 5.0 * res.rejection.std_error

    def test_stepped_window_matches_the_closed_form(self):
        r = off_axis_rates()
        t_m = 0.8
        res = mc_weak_value_cqed(PPS, r, t_m, 20000, 20, dt=t_m / 200, mode="weighted")
        fin = wv_cqed_finite(PPS, r, t_m).value
        assert abs(res.weighted.mean - fin) < 5.0 * res.weighted.std_error + 0.01 * abs(fin)

    def test_step_grid_and_purity_validation(self):
        r = off_axis_rates()
        with pytest.raises(ValueError, match="integer multiple"):
            mc_weak_value_cqed(PPS, r, 0.8, 100, 0, dt=0.3)
        with pytest.raises(ValueError, match="single-shot"):
            mc_weak_value_cqed(PPS, r, 0.8, 100, 0, dt=0.1, purity=0.9)


def test_ensemble_is_blind_to_the_quadrature_split():
    """The averaged state decays at gamma_d and precesses at omega_tilde for
    any LO phase; moving information between record and phase kick cannot
    change the unconditioned evolution."""
    state0 = QubitState(0.5, 0.5 + 0.0j)
    t_total = 1.2
    for dphi in (0.0, 1.0):
        r = off_axis_rates(dphi)
        trace = ensemble_coherence_cqed(state0, r, 1e-3, t_total, 40000, 23)
        assert fit_dephasing_rate(trace) == pytest.approx(r.gamma_d, rel=0.05)
        phase = np.angle(trace.rho12[-1] / trace.rho12[0])
        want = math.remainder(-r.omega_tilde * t_total, 2.0 * math.pi)
        assert phase == pytest.approx(want, abs=0.02)
    with pytest.raises(ValueError, match="integer multiple"):
        ensemble_coherence_cqed(state0, off_axis_rates(), 0.7, t_total, 10, 0)
