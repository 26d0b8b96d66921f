import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from blockindep.calibration import (
    CalibrationDomainError,
    bnp_calibration,
    calibrate,
    calibration_for,
    lh_calibration,
    lr_calibration,
    solve_wd,
    wilks_calibration,
)
from blockindep.core import Dims, RatioSet, ratios
from oracles import clt_mean_var, fisher_density

BALANCED = ratios(Dims(100, 60, 30))  # gamma1 = 1, gamma2 = 3/7, h = 1
GRID = [(g1, g2) for g1 in (0.2, 1.0, 5.0) for g2 in (0.1, 3 / 7, 0.7)]


def test_wd_balanced():
    wd = solve_wd(BALANCED)
    assert wd.w == pytest.approx(1.325730, abs=1e-6)
    assert wd.d == pytest.approx(0.754301, abs=1e-6)
    assert wd.w**2 == pytest.approx(1.757560, abs=1e-6)
    assert wd.d**2 == pytest.approx(0.568971, abs=1e-6)
    assert wd.w * wd.d == pytest.approx(1.0, abs=1e-14)


def test_wd_exact_quadratic():
    # t^2 - 2t + 0.36 = 0 has roots 1.8 and 0.2
    wd = solve_wd(RatioSet.from_gammas(0.2, 0.2))
    assert wd.w**2 == pytest.approx(1.8, abs=1e-14)
    assert wd.d**2 == pytest.approx(0.2, abs=1e-14)


def test_wd_small_gamma1():
    g2 = 0.3
    r = RatioSet.from_gammas(1e-9, g2)
    wd = solve_wd(r)
    assert wd.w * wd.d == pytest.approx(math.sqrt(g2), rel=1e-8)


ratio_pairs = st.tuples(st.floats(1e-3, 50.0), st.floats(1e-3, 0.99))


@given(ratio_pairs)
def test_wd_identities(pair):
    r = RatioSet.from_gammas(*pair)
    wd = solve_wd(r)
    S = (1 - r.gamma2) ** 2 + 1 + r.h**2
    assert wd.w > wd.d > 0
    assert abs(wd.w**2 + wd.d**2 - S) <= 1e-12 * S
    assert abs(wd.w * wd.d - r.h) <= 1e-12 * r.h
    lhs = (1 - r.gamma2) ** 2
    assert abs(lhs - (1 - wd.d**2) * (wd.w**2 - 1)) <= 1e-10 * max(1.0, lhs)


def test_lh_exact_rationals():
    g2 = Fraction(3, 7)
    cal = lh_calibration(BALANCED)
    assert cal.s == pytest.approx(float(1 / (1 - g2)), abs=1e-14)
    assert cal.mu == pytest.approx(float(g2 / (1 - g2) ** 2), abs=1e-14)  # 21/16
    assert cal.sigma2 == pytest.approx(float(2 / (1 - g2) ** 4), abs=1e-12)  # 2401/128
    assert (cal.s, cal.mu, cal.sigma2) == pytest.approx((1.75, 1.3125, 18.7578125))


def test_lh_second_example():
    cal = lh_calibration(RatioSet.from_gammas(0.2, 0.2))
    assert (cal.s, cal.mu, cal.sigma2) == pytest.approx((1.25, 0.3125, 1.7578125), abs=1e-13)


def test_lh_small_gamma2_limit():
    cal = lh_calibration(RatioSet.from_gammas(1.0, 1e-10))
    assert cal.s == pytest.approx(1.0) and cal.mu == pytest.approx(0.0, abs=1e-9)


def test_lr_balanced():
    cal = lr_calibration(BALANCED)
    # w*^2 = 7/3, d*^2 = 3/7: sigma2 = 2 log(49/40)
    assert cal.sigma2 == pytest.approx(2 * math.log(49 / 40), abs=1e-14)
    assert cal.sigma2 == pytest.approx(0.405882, abs=1e-6)


def test_lr_balanced_centering_has_no_branch_term():
    g2 = 3 / 7
    ws, ds = 1 / math.sqrt(g2), math.sqrt(g2)
    expected = math.log(1 / g2 * (1 - g2) ** 2) + (1 - g2) / g2 * math.log(ws) - (1 + g2) / g2 * math.log(ws - ds * g2)
    assert lr_calibration(BALANCED).s == pytest.approx(expected, abs=1e-14)


def test_wilks_balanced():
    cal = wilks_calibration(BALANCED)
    assert cal.sigma2 == pytest.approx(0.782319, abs=1e-6)


def test_bnp_balanced():
    cal = bnp_calibration(BALANCED)
    assert cal.s == pytest.approx(0.429972, abs=1e-6)
    # d^2 = 0.568971 > gamma2 = 3/7, so the mean is negative
    assert cal.mu < 0
    assert cal.mu == pytest.approx(-0.042915, abs=1e-6)


@given(ratio_pairs)
def test_bnp_mean_sign(pair):
    r = RatioSet.from_gammas(*pair)
    wd = solve_wd(r)
    mu = bnp_calibration(r).mu
    if abs(wd.d**2 - r.gamma2) > 1e-9:
        assert (mu < 0) == (wd.d**2 > r.gamma2)


@given(ratio_pairs)
def test_all_calibrations_finite_and_positive_variance(pair):
    r = RatioSet.from_gammas(*pair)
    for sid in ("LR", "W", "LH", "BNP"):
        cal = calibration_for(sid, r)
        assert cal.sigma2 > 0
        assert all(math.isfinite(v) for v in (cal.mu, cal.sigma2, cal.s))


@pytest.mark.parametrize("g1,g2", GRID)
def test_centering_matches_independent_quadrature(g1, g2):
    dens = lambda x: fisher_density(np.array([x]), g1, g2)[0][0]  # noqa: E731
    _, a, b = fisher_density(np.array([0.0]), g1, g2)
    atom = max(0.0, 1 - 1 / g1)
    r = RatioSet.from_gammas(g1, g2)
    opts = dict(limit=200, epsabs=1e-12, epsrel=1e-12)
    for f, sid in ((lambda x: x, "LH"), (np.log1p, "W"), (lambda x: x / (1 + x), "BNP")):
        val = atom * f(0.0) + quad(lambda x: f(x) * dens(x), a, b, **opts)[0]
        assert val == pytest.approx(calibration_for(sid, r).s, abs=1e-7)
    lr = atom * 0.0 + quad(lambda x: -np.log1p(g2 / g1 * x) * dens(x), a, b, **opts)[0]
    assert lr == pytest.approx(lr_calibration(r).s, abs=1e-7)


@pytest.mark.parametrize("g1,g2", [(0.2, 0.2), (1.0, 3 / 7), (5.0, 5 / 9), (0.5, 0.7), (3.0, 0.1)])
def test_mean_and_variance_match_contour_oracle(g1, g2):
    r = RatioSet.from_gammas(g1, g2)
    funcs = {
        "LH": lambda x: x,
        "W": lambda x: np.log(1 + x),
        "BNP": lambda x: x / (1 + x),
        "LR": lambda x: -np.log(1 + g2 / g1 * x),
    }
    for sid, f in funcs.items():
        mu, var = clt_mean_var(f, g1, g2)
        cal = calibration_for(sid, r)
        assert cal.mu == pytest.approx(mu, abs=1e-8), sid
        assert cal.sigma2 == pytest.approx(var, rel=1e-8), sid


@pytest.mark.parametrize("g2", [0.1, 3 / 7, 0.7])
def test_centering_continuous_at_gamma1_one(g2):
    mid_w = wilks_calibration(RatioSet.from_gammas(1.0, g2)).s
    mid_lr = lr_calibration(RatioSet.from_gammas(1.0, g2)).s
    for g1 in (1 - 1e-6, 1 + 1e-6):
        r = RatioSet.from_gammas(g1, g2)
        # the centering itself moves by O(1e-6) with gamma1; compare against a linear extrapolation
        assert wilks_calibration(r).s == pytest.approx(mid_w, abs=1e-5)
        assert lr_calibration(r).s == pytest.approx(mid_lr, abs=1e-5)
    for fn, mid in ((wilks_calibration, mid_w), (lr_calibration, mid_lr)):
        lo = fn(RatioSet.from_gammas(1 - 1e-6, g2)).s
        hi = fn(RatioSet.from_gammas(1 + 1e-6, g2)).s
        assert abs(0.5 * (lo + hi) - mid) <= 1e-8


def test_domain_error_outside_regime():
    bad = RatioSet(gamma1=1.0, gamma2=1.2, h=1.0, c1=0.5, c=1.0)
    with pytest.raises((CalibrationDomainError, ValueError)):
        lr_calibration(bad)


def test_calibrate_dict():
    out = calibrate(Dims(100, 60, 30))
    assert out["s_LH"] == 1.75
    assert {"w", "d", "w_star", "d_star", "mu_BNP", "sigma2_LR"} <= set(out)


def test_center_uses_p2():
    cal = lh_calibration(BALANCED)
    assert cal.center(30) == pytest.approx(30 * 1.75 + 1.3125)
