import numpy as np
import pytest

from psfsr.exceptions import InputError
from psfsr.image import decimate
from psfsr.metrics import ellipticity, weighted_moments
from psfsr.operator import predict_exposure
from psfsr.simulation import (SimSpec, draw_shifts, make_psf, noise_sigma, random_psf_params,
                              snr_signal_level, synthesize_stack)


def test_gaussian_generator_shapes():
    g = make_psf("elliptical-gaussian", {"sigma_x": 3, "sigma_y": 3}, (64, 64))
    assert g.max() == pytest.approx(1.0)
    assert ellipticity(weighted_moments(g, None)) == pytest.approx((0, 0), abs=1e-3)
    g = make_psf("elliptical-gaussian", {"sigma_x": 6, "sigma_y": 3, "theta": 0.0}, (96, 96))
    assert ellipticity(weighted_moments(g, None))[0] == pytest.approx(0.6, abs=0.01)


def test_airy_generator_rings():
    sampling = 8.0
    a = make_psf("obscured-airy", {"sampling": sampling, "obscuration": 0.3, "n_vanes": 0},
                 (129, 129))
    assert a.min() >= 0.0 and a.max() == pytest.approx(1.0)
    assert np.unravel_index(np.argmax(a), a.shape) == (64, 64)
    row = a[64, 64:]
    r = np.arange(row.size) / sampling
    dip = row[(r > 0.8) & (r < 1.6)].min()
    ring = row[(r > 1.4) & (r < 2.5)].max()
    assert dip < 0.01 and ring > 5 * dip


def test_generator_errors():
    with pytest.raises(InputError):
        make_psf("moffat")
    with pytest.raises(InputError):
        make_psf("elliptical-gaussian", {"sigma_x": -1})
    with pytest.raises(InputError):
        make_psf("obscured-airy", {"sampling": 1.0})
    with pytest.raises(InputError):
        make_psf("elliptical-gaussian", {"beta": 2})
    with pytest.raises(InputError):
        SimSpec(psf_kind="moffat")
    with pytest.raises(InputError):
        SimSpec(snr_db=float("nan"))


def test_random_params_are_seeded():
    a = random_psf_params("obscured-airy", np.random.default_rng(4))
    b = random_psf_params("obscured-airy", np.random.default_rng(4))
    assert a == b and a["sampling"] == pytest.approx(2.8)


def test_signal_level_examples():
    assert snr_signal_level(np.full((60, 60), 2.0)) == 0.0
    g = make_psf("elliptical-gaussian", {"sigma_x": 5, "sigma_y": 5, "center": (41, 41)}, (84, 84))
    assert snr_signal_level(3 * g) == pytest.approx(9 * snr_signal_level(g))
    assert snr_signal_level(g) == pytest.approx(np.var(g[16:66, 16:66]))
    with pytest.raises(InputError):
        snr_signal_level(np.ones((20, 20)))
    assert noise_sigma(4.0, np.inf) == 0.0
    assert noise_sigma(4.0, 20.0) == pytest.approx(0.2)


def test_noise_free_zero_shift_is_decimation():
    truth = make_psf("elliptical-gaussian", {"sigma_x": 3, "sigma_y": 2}, (64, 64))
    spec = SimSpec(lr_size=32, n_exposures=3, snr_db=np.inf)
    stack, info = synthesize_stack(truth, spec, shifts=[(0.0, 0.0)] * 3)
    for e in stack.exposures:
        np.testing.assert_allclose(e.image, decimate(truth, 2), atol=1e-14)
    assert info["sigma"] == 0.0 and stack.sigmas == [1.0] * 3


def test_empirical_snr_and_determinism():
    truth = make_psf("elliptical-gaussian", {"sigma_x": 3, "sigma_y": 2}, (168, 168))
    spec = SimSpec(snr_db=20.0)
    rng = np.random.default_rng(9)
    snrs = []
    for _ in range(100):
        stack, info = synthesize_stack(truth, spec, rng=rng)
        noise = stack.exposures[1].image - predict_exposure(truth, info["shifts"][1], 2)
        snrs.append(10 * np.log10(info["signal_level"] / noise.var()))
    assert np.all(np.abs(np.array(snrs) - 20.0) < 0.5)
    a, _ = synthesize_stack(truth, spec)
    b, _ = synthesize_stack(truth, spec)
    np.testing.assert_array_equal(a.cube, b.cube)
    assert a.shifts[0] == (0.0, 0.0)
    with pytest.raises(InputError):
        synthesize_stack(truth[:100, :100], spec)


def test_draw_shifts_range():
    s = np.array(draw_shifts(np.random.default_rng(0), 500, reference_zero=False))
    assert s.min() >= -0.5 and s.max() < 0.5
