import numpy as np
import pytest
from hypothesis import given, strategies as st

from psfsr.exceptions import InputError
from psfsr.metrics import (MetricError, ellipticity, error_map_stats, fwhm_lorentzian,
                           mean_abs_ellipticity_error, measure_shape, pearson_correlation,
                           weighted_moments)
from psfsr.simulation import make_psf


def gauss(sx, sy, theta=0.0, dims=(128, 128)):
    return make_psf("elliptical-gaussian", {"sigma_x": sx, "sigma_y": sy, "theta": theta}, dims)


@pytest.mark.parametrize("w", [None, 3.0, 7.5])
def test_circular_moments(w):
    mu20, mu02, mu11, c = weighted_moments(gauss(4, 4), w)
    assert mu20 == pytest.approx(mu02, rel=1e-6)
    assert abs(mu11) < 1e-6 * mu20
    assert c == pytest.approx((63.5, 63.5), abs=1e-6)
    assert ellipticity((mu20, mu02, mu11)) == pytest.approx((0.0, 0.0), abs=1e-6)


def test_elliptical_moments_and_ellipticity():
    img = gauss(8, 4)
    mu20, mu02, mu11, _ = weighted_moments(img, None)
    assert mu20 / mu02 == pytest.approx(4.0, rel=0.01)
    e1, e2 = ellipticity((mu20, mu02, mu11))
    assert e1 == pytest.approx(0.6, abs=0.01) and e2 == pytest.approx(0.0, abs=0.01)
    r = weighted_moments(np.rot90(img), None)
    assert r[0] == pytest.approx(mu02, rel=1e-9) and r[1] == pytest.approx(mu20, rel=1e-9)
    e1, e2 = ellipticity(weighted_moments(gauss(8, 4, np.pi / 4), None))
    assert e1 == pytest.approx(0.0, abs=0.01) and e2 == pytest.approx(0.6, abs=0.01)


def test_moment_errors():
    with pytest.raises(MetricError):
        weighted_moments(np.zeros((8, 8)))
    with pytest.raises(InputError):
        weighted_moments(np.ones(8))
    with pytest.raises(InputError):
        weighted_moments(np.ones((8, 8)), -1.0)
    with pytest.raises(MetricError):
        ellipticity((0.0, 0.0, 0.0))


def test_fwhm_gaussian_examples():
    img = gauss(3, 3, dims=(64, 64))
    f = fwhm_lorentzian(img)
    assert f == pytest.approx(2.3548 * 3, rel=0.03)
    assert fwhm_lorentzian(10 * img) == pytest.approx(f, rel=1e-6)
    fine = gauss(6, 6, dims=(128, 128))
    assert fwhm_lorentzian(fine) == pytest.approx(2 * f, rel=0.02)
    with pytest.raises(MetricError):
        fwhm_lorentzian(-np.ones((8, 8)))


def test_measure_shape():
    m = measure_shape(gauss(5, 3, dims=(64, 64)))
    assert m.e1 > 0.2 and abs(m.e2) < 1e-6
    assert 2.3548 * 3 < m.fwhm < 2.3548 * 5


def test_mean_abs_ellipticity_error_examples():
    img = gauss(5, 3, dims=(64, 64))
    assert mean_abs_ellipticity_error([img], [img]) == (0.0, 0.0, 0.0, 0.0)
    assert mean_abs_ellipticity_error([(0.1, 0.0)], [(0.0, 0.0)]) == pytest.approx((0.1, 0, 0, 0))
    e1, *_ = mean_abs_ellipticity_error([(0.0, 0.0), (0.0, 0.0)], [(0.1, 0.0), (-0.3, 0.0)])
    assert e1 == pytest.approx(0.2)
    with pytest.raises(InputError):
        mean_abs_ellipticity_error([(0, 0)], [])


@given(st.integers(0, 2 ** 31), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine_invariance(seed, scale, offset):
    a = np.random.default_rng(seed).standard_normal((8, 8))
    assert pearson_correlation(a, a) == pytest.approx(1.0)
    assert pearson_correlation(a, -a) == pytest.approx(-1.0)
    assert pearson_correlation(a, scale * a + offset) == pytest.approx(1.0)


def test_pearson_errors():
    with pytest.raises(MetricError):
        pearson_correlation(np.ones((4, 4)), np.eye(4))
    with pytest.raises(InputError):
        pearson_correlation(np.eye(4), np.eye(3))


def test_error_map_examples(rng):
    t = rng.standard_normal((84, 84))
    err, std = error_map_stats(t, t)
    assert not err.any() and std == 0.0
    err, std = error_map_stats(t, t + 0.7)
    np.testing.assert_allclose(err, 0.7)
    assert std == pytest.approx(0.0, abs=1e-12)
    stds = [error_map_stats(t, t + rng.standard_normal(t.shape))[1] for _ in range(20)]
    assert np.mean(stds) == pytest.approx(np.sqrt(1 - 2 / np.pi), rel=0.03)
