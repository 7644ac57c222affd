import numpy as np
import pytest
from conftest import gaussian_blob

from psfsr.estimation import (centroid_threshold, estimate_centroid, estimate_flux,
                              estimate_parameters, estimate_shifts, estimate_sigma_mad)
from psfsr.exceptions import EstimationError, InputError
from psfsr.image import LRStack
from psfsr.simulation import noise_sigma, snr_signal_level

CENTER = (41.5, 41.5)


def noise_for(img, snr_db=30.0):
    return noise_sigma(snr_signal_level(img), snr_db)


def test_sigma_mad_examples():
    assert estimate_sigma_mad(np.full((10, 10), 3.0)) == 0.0
    rng = np.random.default_rng(0)
    est = np.array([estimate_sigma_mad(rng.standard_normal((84, 84))) for _ in range(1000)])
    assert np.mean((est >= 0.95) & (est <= 1.05)) > 0.99
    img = 2.0 * rng.standard_normal((84, 84))
    img[10, 10] = 1000.0
    assert estimate_sigma_mad(img) == pytest.approx(2.0, rel=0.05)
    with pytest.raises(InputError):
        estimate_sigma_mad([1.0])


@pytest.mark.parametrize("sigma,peak,expected", [(1, 10, 4), (1, 3, 2), (2, 20, 8)])
def test_centroid_threshold_formula(sigma, peak, expected):
    img = np.zeros((5, 5))
    img[2, 2] = peak
    assert centroid_threshold(img, sigma) == pytest.approx(expected)


def test_centroid_symmetric_and_shifted():
    blob = gaussian_blob((84, 84), CENTER, 2.0)
    ci, cj = estimate_centroid(blob, 1e-3)
    assert ci == pytest.approx(41.5, abs=1e-3) and cj == pytest.approx(41.5, abs=1e-3)
    moved = gaussian_blob((84, 84), (41.8, 41.3), 2.0)
    mi, mj = estimate_centroid(moved, 1e-3)
    assert mi - ci == pytest.approx(0.3, abs=0.02)
    assert mj - cj == pytest.approx(-0.2, abs=0.02)


def test_centroid_noise_monte_carlo():
    rng = np.random.default_rng(1)
    blob = gaussian_blob((84, 84), CENTER, 2.0)
    sigma = noise_for(blob)
    err = []
    for _ in range(100):
        c = estimate_centroid(blob + sigma * rng.standard_normal(blob.shape), sigma)
        err.append(np.hypot(c[0] - 41.5, c[1] - 41.5))
    assert np.median(err) < 0.05


def test_centroid_rejects_empty():
    with pytest.raises(EstimationError):
        estimate_centroid(np.zeros((8, 8)), 1.0)


def test_estimate_shifts_examples():
    blob = gaussian_blob((84, 84), CENTER, 2.0)
    same = LRStack.from_cube(np.array([blob, blob]), 2, sigmas=[1e-3] * 2)
    assert estimate_shifts(same) == [(0.0, 0.0), (0.0, 0.0)]
    assert estimate_shifts(LRStack.from_cube(blob[None], 2, sigmas=[1e-3])) == [(0.0, 0.0)]
    rng = np.random.default_rng(2)
    moved = gaussian_blob((84, 84), (41.75, 42.0), 2.0)
    sigma = noise_for(blob)
    errs = []
    for _ in range(20):
        cube = np.array([blob, moved]) + sigma * rng.standard_normal((2, 84, 84))
        s = estimate_shifts(LRStack.from_cube(cube, 2, sigmas=[sigma] * 2))[1]
        errs.append(np.hypot(s[0] - 0.25, s[1] - 0.5))
    assert np.median(errs) < 0.05


def test_flux_examples():
    delta = np.zeros((21, 21))
    delta[10, 10] = 5.0
    assert estimate_flux(delta, (10.0, 10.0)) == 5.0
    # direct enumeration: integer offsets with i^2 + j^2 <= 9
    count = sum(1 for i in range(-3, 4) for j in range(-3, 4) if i * i + j * j <= 9)
    assert count == 29
    assert estimate_flux(np.ones((21, 21)), (10.0, 10.0), 3.0) == 29
    with pytest.raises(EstimationError):
        estimate_flux(-np.ones((21, 21)), (10.0, 10.0))


def test_flux_ratio_monte_carlo():
    rng = np.random.default_rng(3)
    blob = gaussian_blob((84, 84), CENTER, 2.0)
    sigma = noise_for(blob)
    ratios = []
    for _ in range(50):
        cube = np.array([blob, 2 * blob]) + sigma * rng.standard_normal((2, 84, 84))
        rep = estimate_parameters(LRStack.from_cube(cube, 2))
        ratios.append(rep.relative_fluxes[1])
    assert np.median(ratios) == pytest.approx(2.0, rel=0.05)


def test_estimate_parameters_switches():
    blob = gaussian_blob((84, 84), CENTER, 2.0)
    stack = LRStack.from_cube(np.array([blob, blob]), 2, sigmas=[0.5, 0.5], fluxes=[1.0, 3.0],
                              shifts=[(0, 0), (0.1, 0.2)])
    rep = estimate_parameters(stack, noise=False, flux=False, shifts=False, sigma=0.25)
    assert rep.sigmas == [0.25, 0.25]
    assert rep.fluxes == [1.0, 3.0] and rep.shifts == [(0, 0), (0.1, 0.2)]
    rep = estimate_parameters(stack, noise=False, flux=False, shifts=False)
    assert rep.sigmas == [0.5, 0.5]
    with pytest.raises(EstimationError) as info:
        estimate_parameters(LRStack.from_cube(np.array([blob, -blob]), 2))
    assert info.value.index == 1
