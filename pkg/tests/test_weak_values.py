"""Closed-form scaled averages, the turnover curve, and the MC estimators."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weakval_sim.bayes import GaussianLikelihood
from weakval_sim.core import aav_weak_value
from weakval_sim.errors import DegenerateDenominator, NoSelections
from weakval_sim.trajectory import MeasurementStrength, Stepper
from weakval_sim.weak_values import (
    ThetaCurve,
    mc_weak_value,
    pps_for_theta,
    wv_aav_linear,
    wv_bayes_general,
    wv_curve_peak,
    wv_finite_strength,
    wv_quadrature,
    wv_short_time,
    wv_theta_curve,
    write_theta_csv,
)

angles = st.floats(min_value=0.05, max_value=3.0)


@given(angles)
def test_theta_family_weak_value_and_overlap(theta):
    pps = pps_for_theta(theta)
    w = aav_weak_value(pps)
    assert w.re == pytest.approx(math.tan(theta / 2.0), rel=1e-12)
    assert abs(w.im) < 1e-12
    assert abs(pps.overlap) == pytest.approx(abs(math.cos(theta / 2.0)), abs=1e-12)


@given(angles, st.floats(min_value=1e-4, max_value=5e-3))
def test_short_time_tracks_exact_form_at_weak_coupling(theta, g):
    pps = pps_for_theta(theta)
    fin = wv_finite_strength(pps, g)
    sho = wv_short_time(pps, g)
    assert sho == pytest.approx(fin, rel=5e-3, abs=1e-9)


def test_short_time_denominator_can_vanish():
    w = math.tan(0.2 * math.pi)
    g_bad = 1.0 / (1.0 - w * w)
    with pytest.raises(DegenerateDenominator, match="wv_finite_strength"):
        wv_short_time(pps_for_theta(0.4 * math.pi), g_bad)
    # the exact form is regular at the same strength
    assert math.isfinite(wv_finite_strength(pps_for_theta(0.4 * math.pi), g_bad))


def test_finite_strength_validates_and_handles_orthogonal_selection():
    with pytest.raises(ValueError, match="non-negative"):
        wv_finite_strength(pps_for_theta(1.0), -0.1)
    # orthogonal pre/post pair: moments route, zero by symmetry once g > 0
    pps = pps_for_theta(math.pi)
    assert abs(pps.overlap) < 1e-12
    assert wv_finite_strength(pps, 0.3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateDenominator, match="vanished"):
        wv_finite_strength(pps, 0.0)


def test_closed_record_mean_matches_quadrature():
    """Gauss-Hermite integration of x P(select | x) over the record mixture is
    an oracle independent of the closed form."""
    pps = pps_for_theta(2.2)
    lik = GaussianLikelihood.from_rate(1.0, 0.5)
    assert wv_quadrature(pps, lik) == pytest.approx(wv_bayes_general(pps, lik), abs=1e-8)


def test_anomaly_is_a_weak_coupling_effect():
    g = 0.2
    theta_star, peak = wv_curve_peak(0.5 * (1.0 - math.exp(-2.0 * g)))
    assert wv_finite_strength(pps_for_theta(theta_star), g) == pytest.approx(peak, rel=1e-12)
    # past the turnover the scaled average collapses even as tan(theta/2) blows up
    assert wv_finite_strength(pps_for_theta(0.999 * math.pi), g) < 0.1 * peak


def test_curve_peak_domain():
    for bad in (0.0, 1.0, -0.3, 1.7):
        with pytest.raises(ValueError, match="strictly inside"):
            wv_curve_peak(bad)
    theta_star, peak = wv_curve_peak(0.5)
    assert theta_star == pytest.approx(math.pi / 2.0)
    assert peak == pytest.approx(1.0)


def test_theta_curve_table_and_csv(tmp_path):
    thetas = np.linspace(0.2, 2.8, 9)
    curve = wv_theta_curve(0.05, thetas)
    assert isinstance(curve, ThetaCurve)
    assert curve.effective_strength == pytest.approx(0.5 * (1.0 - math.exp(-0.1)))
    np.testing.assert_allclose(curve.aav, np.tan(thetas / 2.0), rtol=1e-12)
    path = tmp_path / "curve.csv"
    write_theta_csv(curve, path, mc_points=[(float(thetas[3]), 0.9, 0.1)])
    lines = path.read_text().splitlines()
    assert lines[0] == "# schema=1"
    body = np.genfromtxt(path, delimiter=",", skip_header=3)
    assert body.shape == (9, 6)
    assert body[3, 4] == pytest.approx(0.9)
    assert np.isnan(body[0, 4])


def test_mc_estimators_agree_with_each_other_and_the_closed_form():
    pps = pps_for_theta(2.2)
    g = 0.2
    res = mc_weak_value(pps, MeasurementStrength.from_g(g), Stepper.BAYES_EXACT, 40000, 9)
    closed = wv_finite_strength(pps, g)
    for which in ("weighted", "rejection"):
        mean, se = res.scaled(which)
        assert abs(mean - closed) < 5.0 * se
    wm, wse = res.scaled()
    rm, rse = res.scaled("rejection")
    assert abs(wm - rm) < 5.0 * math.hypot(wse, rse)
    # acceptance frequency estimates the mean selection weight
    p = res.rejection.success_rate
    assert res.rejection.n_selected == round(p * res.weighted.n_total)
    assert abs(p - res.mean_weight) < 5.0 * math.sqrt(p * (1.0 - p) / res.weighted.n_total)


def test_stepped_estimator_tracks_the_closed_form():
    pps = pps_for_theta(2.2)
    g = 0.2
    ms = MeasurementStrength.from_g(g, 1.0, 200)
    res = mc_weak_value(pps, ms, Stepper.ITO_EULER, 20000, 10, mode="weighted")
    closed = wv_finite_strength(pps, g)
    mean, se = res.scaled()
    assert abs(mean - closed) < 5.0 * se + 0.01 * abs(closed)
    assert res.rejection is None
    with pytest.raises(ValueError, match="rejection"):
        res.scaled("rejection")


def test_rare_selection_guard():
    pps = pps_for_theta(0.998 * math.pi)
    ms = MeasurementStrength.from_g(0.01)
    with pytest.raises(NoSelections, match="post-selected"):
        mc_weak_value(pps, ms, Stepper.BAYES_EXACT, 2000, 1)
    # weighted-only runs never reject trajectories, so the guard does not fire
    res = mc_weak_value(pps, ms, Stepper.BAYES_EXACT, 2000, 1, mode="weighted")
    assert res.rejection is None
    assert res.mean_weight < 0.05


def test_mode_token_is_validated():
    with pytest.raises(ValueError, match="mode"):
        mc_weak_value(pps_for_theta(1.0), MeasurementStrength.from_g(0.1),
                      Stepper.BAYES_EXACT, 100, 0, mode="exact")
