import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blockindep.calibration import bnp_calibration, wilks_calibration
from blockindep.core import Dims, PartitionedCov, RatioSet, ratios
from blockindep.spectral import IntegrationError, esd_from_eigs, fisher_lsd, integrate, ks_distance
from blockindep.statistics import fisher_pair, sample_cov
from oracles import fisher_density

GRID = [(g1, g2) for g1 in (0.2, 1.0, 5.0) for g2 in (0.1, 3 / 7, 0.7)]


def test_support_balanced():
    lsd = fisher_lsd(RatioSet.from_gammas(1.0, 3 / 7))
    assert lsd.a == 0.0
    assert lsd.b == pytest.approx(12.25, abs=1e-12)
    assert lsd.mass0 == 0.0


def test_support_small_ratios():
    lsd = fisher_lsd(RatioSet.from_gammas(0.2, 0.2))
    assert lsd.a == pytest.approx(0.25, abs=1e-14)
    assert lsd.b == pytest.approx(4.0, abs=1e-14)


def test_atom():
    assert fisher_lsd(RatioSet.from_gammas(5.0, 0.3)).mass0 == pytest.approx(0.8)


@pytest.mark.parametrize("g1,g2", GRID)
def test_normalization(g1, g2):
    lsd = fisher_lsd(RatioSet.from_gammas(g1, g2))
    assert integrate(lsd, lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-8)
    assert lsd.cdf(np.array([lsd.b]))[0] == 1.0
    assert lsd._cdf_vals[-1] == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("g1,g2", GRID)
def test_moment_identities(g1, g2):
    r = RatioSet.from_gammas(g1, g2)
    lsd = fisher_lsd(r)
    assert integrate(lsd, lambda x: x) == pytest.approx(1 / (1 - g2), abs=1e-7)
    assert integrate(lsd, np.log1p) == pytest.approx(wilks_calibration(r).s, abs=1e-7)
    assert integrate(lsd, lambda x: x / (1 + x)) == pytest.approx(bnp_calibration(r).s, abs=1e-7)


def test_mean_balanced():
    lsd = fisher_lsd(ratios(Dims(100, 60, 30)))
    assert integrate(lsd, lambda x: x) == pytest.approx(1.75, abs=1e-9)
    assert integrate(lsd, lambda x: x / (1 + x)) == pytest.approx(0.429972, abs=1e-6)


@pytest.mark.parametrize("g1,g2", GRID)
def test_density_matches_closed_form(g1, g2):
    lsd = fisher_lsd(RatioSet.from_gammas(g1, g2))
    x = np.linspace(lsd.a, lsd.b, 101)[1:-1]
    np.testing.assert_allclose(lsd.density(x), fisher_density(x, g1, g2)[0], rtol=1e-12)
    assert np.all(lsd.density(x) > 0)
    assert lsd.density(np.array([lsd.b]))[0] == 0.0


def test_square_root_edges():
    lsd = fisher_lsd(RatioSet.from_gammas(0.2, 0.2))
    for eps in (1e-4, 1e-6, 1e-8):
        assert lsd.density(np.array([lsd.a + eps]))[0] / math.sqrt(eps) < 10
        assert lsd.density(np.array([lsd.b - eps]))[0] / math.sqrt(eps) < 10


def test_integrate_rejects_nonfinite():
    lsd = fisher_lsd(RatioSet.from_gammas(5.0, 0.3))
    with pytest.raises(IntegrationError):
        with np.errstate(divide="ignore"):
            integrate(lsd, lambda x: 1.0 / x)


@given(st.floats(0.05, 10), st.floats(0.02, 0.9), st.floats(0.0, 1.0))
def test_cdf_monotone_and_quantile_inverse(g1, g2, u):
    lsd = fisher_lsd(RatioSet.from_gammas(g1, g2))
    x = np.linspace(-1, lsd.b + 1, 400)
    F = lsd.cdf(x)
    assert np.all(np.diff(F) >= -1e-12)
    if u > lsd.mass0 + 1e-9:
        q = lsd.quantile(np.array([u]))
        assert lsd.cdf(q)[0] == pytest.approx(u, abs=1e-6)


def test_ks_own_quantiles():
    lsd = fisher_lsd(RatioSet.from_gammas(0.5, 0.3))
    m = 400
    eigs = lsd.quantile((np.arange(1, m + 1) - 0.5) / m)
    assert ks_distance(esd_from_eigs(eigs), lsd) <= 1 / (2 * m) + 1e-6


def test_ks_all_zero_against_atom():
    lsd = fisher_lsd(RatioSet.from_gammas(5.0, 0.3))
    assert ks_distance(esd_from_eigs(np.zeros(50)), lsd) == pytest.approx(0.2, abs=1e-9)


def test_ks_simulated_null():
    rng = np.random.default_rng(12)
    d = Dims(1000, 600, 300)
    X = rng.standard_normal((d.n, d.p))
    fp = fisher_pair(PartitionedCov.from_matrix(sample_cov(X), d.p1), d)
    assert ks_distance(esd_from_eigs(fp.eigs), fisher_lsd(ratios(d))) < 0.05


def test_esd_validation():
    with pytest.raises(ValueError):
        esd_from_eigs([])
    with pytest.raises(ValueError):
        esd_from_eigs([1.0, -1e-6])
    e = esd_from_eigs([0.5, -1e-12, 2.0])
    np.testing.assert_array_equal(e.eigs, [2.0, 0.5, 0.0])
