from datetime import datetime, timedelta

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from lakeice.exceptions import ParseError, SingularAtmosphereError, SingularFitError, ValidationError
from lakeice.lswt import (AtmParams, BandSpec, Quality, fit_lswt_regression, inverse_planck,
                          invert_pmw, invert_pmw_array, match_observations, planck_radiance,
                          read_atm_csv, regression_samples, simulate_toa_radiance, validation_stats)

I5 = BandSpec("I5", 11.45)


def planck_mp(T, center_um):
    """Planck's law from CODATA h, c, k in 50-digit arithmetic, per cm^-1 in mW m^-2 sr^-1."""
    mpmath.mp.dps = 50
    h = mpmath.mpf("6.62607015e-34")
    c = mpmath.mpf("299792458")
    k = mpmath.mpf("1.380649e-23")
    nu = 100 * mpmath.mpf(10) ** 4 / mpmath.mpf(center_um)  # m^-1
    b = 2 * h * c ** 2 * nu ** 3 / (mpmath.exp(h * c * nu / (k * mpmath.mpf(T))) - 1)
    return float(b * 100 * 1000)


@pytest.mark.parametrize("T", [250.0, 273.15, 300.0])
def test_planck_round_trip(T):
    assert abs(inverse_planck(planck_radiance(T, I5), I5) - T) < 1e-6


def test_planck_monotone():
    assert planck_radiance(280, I5) > planck_radiance(270, I5)


@pytest.mark.parametrize("T", [240.0, 300.0, 320.0])
def test_planck_against_high_precision(T):
    # the fixed radiation constants are rounded to ~1e-6, which bounds the agreement
    assert planck_radiance(T, I5) == pytest.approx(planck_mp(T, 11.45), rel=1e-5)


def test_planck_domain():
    with pytest.raises(ValidationError):
        planck_radiance(0.0, I5)


def test_band_correction_round_trip():
    band = BandSpec("x", 10.8, alpha=1.02, beta=-3.0)
    for T in (260.0, 290.0):
        assert inverse_planck(planck_radiance(T, band), band) == pytest.approx(T, abs=1e-9)


def test_vacuum_and_opaque_atmospheres():
    assert simulate_toa_radiance(290, AtmParams(1, 0, 0, 0, 1), I5) == planck_radiance(290, I5)
    assert simulate_toa_radiance(290, AtmParams(0, 1.7, 2.0, 0, 0.98), I5) == 1.7


def test_forward_hand_substitution():
    B = planck_radiance(285, I5)
    expected = 0.8 * (0.99 * B + 0.01 * 1.5) + 1.2
    assert simulate_toa_radiance(285, AtmParams(0.8, 1.2, 1.5, 0, 0.99), I5) == pytest.approx(expected, rel=1e-15)


def test_inversion_against_bisection():
    atm = AtmParams(0.85, 1.0, 1.3, 0, 0.99)
    L = simulate_toa_radiance(278.15, atm, I5)
    root = brentq(lambda t: simulate_toa_radiance(t, atm, I5) - L, 150, 400, xtol=1e-12)
    r = invert_pmw(L, atm, I5)
    assert r.flag is Quality.OK
    assert abs(r.lswt - 278.15) < 1e-3
    assert abs(r.lswt - root) < 1e-6


def test_inversion_vacuum_is_brightness_temperature():
    L = planck_radiance(271.3, I5)
    assert invert_pmw(L, AtmParams(1, 0, 0, 0, 1), I5).lswt == pytest.approx(271.3, abs=1e-9)


def test_inversion_errors_and_flags():
    with pytest.raises(SingularAtmosphereError):
        invert_pmw(5.0, AtmParams(1e-7, 0, 0, 0, 1), I5)
    atm = AtmParams(0.8, 2.0, 1.0, 0, 0.99)
    assert invert_pmw(1.0, atm, I5).flag is Quality.OUT_OF_RANGE
    assert invert_pmw(simulate_toa_radiance(340, atm, I5), atm, I5).flag is Quality.OUT_OF_RANGE
    assert invert_pmw(float("nan"), atm, I5).flag is Quality.CLOUD


def test_inversion_array_matches_scalar():
    atm = AtmParams(0.9, 0.5, 0.8, 0, 0.985)
    T = np.array([[260.0, 280.0], [300.0, 350.0]])
    L = simulate_toa_radiance(T, atm, I5)
    out, ok = invert_pmw_array(L, atm, I5, cloudy=[[False, True], [False, False]])
    assert ok.tolist() == [[True, False], [True, False]]
    assert out[0, 0] == pytest.approx(invert_pmw(L[0, 0], atm, I5).lswt, abs=1e-12)


atm_strategy = st.builds(AtmParams, st.floats(0.5, 1.0), st.floats(0, 3), st.floats(0, 3),
                         st.just(0.0), st.floats(0.95, 1.0))


@settings(max_examples=200)
@given(st.floats(240, 320), atm_strategy)
def test_forward_inverse_exact(T, atm):
    assert abs(invert_pmw(simulate_toa_radiance(T, atm, I5), atm, I5).lswt - T) < 1e-3


@given(atm_strategy, st.floats(5, 12), st.floats(0.01, 2))
def test_inversion_monotone_in_radiance(atm, L, dL):
    assert invert_pmw(L + dL, atm, I5).lswt > invert_pmw(L, atm, I5).lswt


def test_regression_exact_lines():
    bt = np.linspace(260, 290, 7)
    assert fit_lswt_regression(np.column_stack([bt, bt])) == pytest.approx((1.0, 0.0), abs=1e-12)
    a, b = fit_lswt_regression(np.column_stack([1.02 * bt - 4.5, bt]))
    assert abs(a - 1.02) < 1e-9 and abs(b + 4.5) < 1e-9


def test_regression_singular():
    with pytest.raises(SingularFitError):
        fit_lswt_regression([(270, 265), (275, 265)])


@given(st.permutations(list(range(8))))
def test_regression_order_invariant(perm):
    s = np.column_stack([np.arange(8) * 1.3 + 270, np.arange(8) ** 1.1 + 265])
    a1, b1 = fit_lswt_regression(s)
    a2, b2 = fit_lswt_regression(s[list(perm)])
    assert a1 == pytest.approx(a2, rel=1e-12) and b1 == pytest.approx(b2, rel=1e-9)


@pytest.mark.parametrize("atm", [AtmParams(0.85, 1.0, 1.3, 0, 0.99), AtmParams(0.5, 3.0, 3.0, 0, 0.95)])
def test_regression_path_matches_direct_inversion(atm):
    t_skin = 278.0
    s = regression_samples(t_skin, atm, I5)
    assert len(s) == 21 and s[0, 0] == t_skin - 5 and s[-1, 0] == t_skin + 15
    a, b = fit_lswt_regression(s)
    for T in s[:, 0]:
        L = simulate_toa_radiance(T, atm, I5)
        direct = invert_pmw(L, atm, I5).lswt
        via_reg = a * inverse_planck(L, I5) + b
        assert abs(via_reg - direct) < 0.05


def test_validation_stats_basic():
    a = np.array([270.0, 275.0, 280.0, 281.5])
    assert validation_stats(a, a) == (0.0, 0.0, 1.0)
    bias, rmse, r2 = validation_stats(a + 1.0, a)
    assert bias == pytest.approx(1.0) and rmse == pytest.approx(1.0) and r2 == pytest.approx(1.0)
    assert validation_stats(a, np.full(4, 3.0))[2] is None


@given(st.lists(st.floats(-50, 50), min_size=3, max_size=20), st.integers(0, 1000))
def test_validation_bias_antisymmetric(a, seed):
    a = np.array(a)
    b = np.random.default_rng(seed).normal(size=a.size)
    assert validation_stats(a, b)[0] == pytest.approx(-validation_stats(b, a)[0], abs=1e-12)


def test_match_single_pixel():
    t = datetime(2017, 1, 5, 10, 0)
    pairs, n = match_observations([(t, [[4.2]], [[False]])], [(t, 4.0)])
    assert n == 0 and pairs[0].satellite == 4.2 and pairs[0].insitu == 4.0 and not pairs[0].cloud


def test_match_window_rules():
    t = datetime(2017, 1, 5, 10, 0)
    vals = np.arange(1, 10, dtype=float).reshape(3, 3)
    two = np.zeros((3, 3), bool)
    two[2, 1:] = True
    pairs, _ = match_observations([(t, vals, two)], [(t + timedelta(minutes=10), 3.0)])
    assert pairs[0].satellite == 4.0 and not pairs[0].cloud
    three = two.copy()
    three[0, 0] = True
    pairs, _ = match_observations([(t, vals, three)], [(t, 3.0)])
    assert pairs[0].cloud


def test_match_drops_distant_samples():
    t = datetime(2017, 1, 5, 10, 0)
    sat = [(t, [[1.0]], [[False]]), (t + timedelta(hours=5), [[2.0]], [[False]])]
    pairs, n = match_observations(sat, [(t + timedelta(minutes=31), 1.0), (t + timedelta(hours=5, minutes=1), 2.0)])
    assert n == 1 and len(pairs) == 1 and pairs[0].satellite == 2.0


def test_atm_csv(tmp_path):
    p = tmp_path / "atm.csv"
    p.write_text("timestamp,tau,l_up,l_down,theta_deg,epsilon\n2017-01-05T10:00:00,0.85,1.0,1.3,12.5,0.99\n")
    d = read_atm_csv(p)
    assert d[datetime(2017, 1, 5, 10)] == AtmParams(0.85, 1.0, 1.3, 12.5, 0.99)
    p.write_text("timestamp,tau\n")
    with pytest.raises(ParseError, match="atm.csv"):
        read_atm_csv(p)


def test_band_json(tmp_path):
    p = tmp_path / "band.json"
    p.write_text('{"name": "I5", "center_um": 11.45, "beta": 0.5}')
    b = BandSpec.from_json(p)
    assert b.nu_c == pytest.approx(1e4 / 11.45) and b.beta == 0.5 and b.alpha == 1.0
