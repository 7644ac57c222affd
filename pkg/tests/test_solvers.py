import dataclasses

import numpy as np
import pytest

from psfsr.exceptions import EstimationError, InputError, SolverDivergence
from psfsr.image import LRStack, decimate, zero_pad_upsample
from psfsr.operator import ObservationOperator
from psfsr.simulation import SimSpec, make_psf, synthesize_stack
from psfsr.solvers import (SolverConfig, calibrate_lambda, first_guess, gfb_solve,
                           median_first_guess, quadratic_baseline, shift_and_add, sprite,
                           update_weights)
from psfsr.wavelets import get_dictionary

PHASE_SHIFTS = [(0.0, 0.0), (-0.5, 0.0), (0.0, -0.5), (-0.5, -0.5)]


def small_truth(p=32, d=2, sx=2.6, sy=1.8, theta=0.4):
    return make_psf("elliptical-gaussian", {"sigma_x": sx, "sigma_y": sy, "theta": theta},
                    (p * d, p * d))


def phase_stack(truth, d=2):
    # exposure with shift -k/d samples the HR grid at rows d*i + k
    cube = [truth[a::d, b::d] for a in range(d) for b in range(d)]
    shifts = [(-a / d, -b / d) for a in range(d) for b in range(d)]
    return LRStack.from_cube(np.array(cube), d, shifts=shifts)


def test_shift_and_add_identity():
    x = np.random.default_rng(0).standard_normal((9, 9))
    np.testing.assert_array_equal(shift_and_add(LRStack.from_cube(x[None], 1)), x)


def test_shift_and_add_exact_on_all_phases():
    truth = np.random.default_rng(1).standard_normal((32, 32))
    stack = phase_stack(truth)
    assert sorted(stack.shifts) == sorted(PHASE_SHIFTS)
    out, filled = shift_and_add(stack, return_mask=True)
    assert not filled.any()
    assert np.abs(out - truth).max() < 1e-10


def test_shift_and_add_identical_exposures():
    rng = np.random.default_rng(2)
    lr = rng.standard_normal((3, 8, 8))
    stack = LRStack.from_cube(lr, 2)
    out, filled = shift_and_add(stack, return_mask=True, fill_holes=False)
    np.testing.assert_allclose(out, zero_pad_upsample(lr.mean(axis=0), 2), atol=1e-14)
    assert filled.sum() == 3 * 64
    # by default the holes are interpolated from the populated neighbours
    assert np.abs(shift_and_add(stack)[filled]).sum() > 0


def test_shift_and_add_divides_flux():
    truth = np.random.default_rng(3).standard_normal((16, 16))
    stack = phase_stack(truth)
    bright = LRStack.from_cube(stack.cube * np.array([1, 2, 3, 4.0])[:, None, None], 2,
                               fluxes=[1, 2, 3, 4.0], shifts=stack.shifts)
    np.testing.assert_allclose(shift_and_add(bright), truth, atol=1e-12)


def test_first_guess_noise_free_equals_shift_and_add():
    # a field wide enough that the PSF wings vanish at the border
    stack = phase_stack(small_truth(48))
    sa = shift_and_add(stack)
    np.testing.assert_allclose(first_guess(stack, "starlet2", 3), sa, atol=1e-8)


def test_first_guess_denoises():
    truth = small_truth()
    spec = SimSpec(lr_size=32, snr_db=30.0)
    rng = np.random.default_rng(4)
    better = 0
    for _ in range(5):
        stack, _ = synthesize_stack(truth, spec, rng=rng)
        g, noisy, _ = first_guess(stack, "starlet2", 3, return_details=True)
        better += np.std(g - truth) < np.std(noisy - truth)
    assert better == 5


def test_first_guess_pure_noise_is_small():
    rng = np.random.default_rng(5)
    sigma = 0.1
    stack = LRStack.from_cube(sigma * rng.standard_normal((4, 32, 32)), 2, shifts=PHASE_SHIFTS)
    assert np.abs(first_guess(stack, "starlet2", 3)).max() < 5 * sigma


def test_weight_law_examples():
    assert update_weights(0.0, 1.0) == 1.0
    assert update_weights(3.0, 1.0) == 0.5
    assert update_weights(-3.0, 1.0) == 0.5
    assert update_weights(1e12, 1.0) < 1e-11
    w = update_weights(np.linspace(0, 100, 200), 2.0)
    assert np.all(np.diff(w) < 0)
    assert update_weights(5.0, 0.0) == 1.0


def _noise_op(p=32, sigma=1.0):
    return ObservationOperator(PHASE_SHIFTS, [1.0] * 4, [sigma] * 4, (p, p), 2)


def test_calibrate_lambda_zero_residual():
    op = _noise_op()
    dico = get_dictionary("starlet2", op.hr_shape, 3)
    lam = calibrate_lambda(op, dico, residual=np.zeros(op.data_shape))
    assert lam.shape == (4, 1, 1) and not lam.any()
    with pytest.raises(InputError):
        calibrate_lambda(op, dico)
    with pytest.raises(InputError):
        calibrate_lambda(op, dico, "guess", residual=np.zeros(op.data_shape))


@pytest.mark.parametrize("name", ["starlet2", "bior79"])
def test_calibration_modes_agree(name):
    op = _noise_op()
    dico = get_dictionary(name, op.hr_shape, 2)
    mc = calibrate_lambda(op, dico, "monte-carlo", n_realizations=60, seed=1)
    resid = np.random.default_rng(2).standard_normal(op.data_shape)
    rm = calibrate_lambda(op, dico, "residual-mad", residual=resid)
    inner = (slice(None), slice(8, -8), slice(8, -8))
    mc_band = np.median(mc[inner], axis=(1, 2))
    np.testing.assert_allclose(rm[:-1, 0, 0], mc_band[:-1], rtol=0.1)


def test_threshold_scales_with_noise():
    # image-domain threshold mu * lambda is linear in the data noise level
    rng = np.random.default_rng(6)
    levels = []
    for sigma in (1.0, 2.0):
        op = _noise_op(sigma=sigma)
        dico = get_dictionary("starlet2", op.hr_shape, 2)
        noise = sigma * rng.standard_normal(op.data_shape)
        lam = calibrate_lambda(op, dico, residual=noise / sigma)
        levels.append(lam[:-1, 0, 0] / op.lipschitz)
    np.testing.assert_allclose(levels[1] / levels[0], 2.0, rtol=0.1)


def test_gfb_zero_fixed_point():
    op = _noise_op(16)
    res = gfb_solve(op, np.zeros(op.data_shape), np.zeros(op.hr_shape),
                    cfg=SolverConfig(n_scales=2, n_max=20))
    assert not res.delta.any()


def test_gfb_least_squares_without_prior():
    rng = np.random.default_rng(7)
    op = ObservationOperator([(0, 0)] * 4, [1.0, 1.5, 0.8, 1.2], [1.0, 2.0, 1.0, 0.5], (16, 16), 1)
    z = rng.standard_normal(op.data_shape)
    cfg = SolverConfig(kappa=0.0, positivity=False, n_max=500, n_scales=2, rel_tol=0.0)
    res = gfb_solve(op, z, np.zeros(op.hr_shape), cfg=cfg)
    atz = op.adjoint(z)
    assert np.linalg.norm(op.normal(res.delta) - atz) / np.linalg.norm(atz) < 1e-4


def test_gfb_positivity_and_history():
    rng = np.random.default_rng(8)
    truth = small_truth(16)
    op = ObservationOperator([(0, 0), (0.3, -0.2), (-0.4, 0.1)], [1.0] * 3, [0.01] * 3, (16, 16), 2)
    z = op.forward(truth) + rng.standard_normal(op.data_shape)
    x0 = np.maximum(truth + 0.05 * rng.standard_normal(truth.shape), 0)
    seen = []
    res = gfb_solve(op, z, x0, cfg=SolverConfig(n_scales=2, n_max=30),
                    callback=lambda n, s: seen.append(n))
    assert np.all(res.delta >= -x0 - 1e-9)
    h = res.state.history
    assert len(h["objective"]) == res.iterations + 1 == len(seen) + 1
    assert len(h["rel_change"]) == len(h["inner_iters"]) == res.iterations


def test_gfb_divergence_guard():
    op = _noise_op(16)
    z = np.random.default_rng(9).standard_normal(op.data_shape)
    cfg = SolverConfig(n_scales=2, n_max=50, positivity=False, kappa=0.0)
    # an underestimated rho gives a step far beyond 2 / rho(M^T M)
    with pytest.raises(SolverDivergence, match="objective rose"):
        gfb_solve(op, z, np.zeros(op.hr_shape), cfg=cfg, rho=op.lipschitz / 50)


def test_config_validation():
    with pytest.raises(InputError):
        SolverConfig(omega1=0.3, omega2=0.3)
    with pytest.raises(InputError):
        SolverConfig(lambda_calibration="oracle")
    with pytest.raises(InputError):
        SolverConfig(n_max=0)
    cfg = SolverConfig()
    cfg.check_steps(2.0, 0.5)
    with pytest.raises(InputError):
        cfg.check_steps(2.0, 1.0)
    with pytest.raises(InputError):
        dataclasses.replace(cfg, relax=1.6).check_steps(2.0, 0.5)


def test_sprite_noise_free_small():
    truth = small_truth(24)
    spec = SimSpec(lr_size=24, snr_db=np.inf)
    stack, _ = synthesize_stack(truth, spec, rng=np.random.default_rng(10))
    res = sprite(stack, SolverConfig(n_scales=3), estimate_noise=False, estimate_flux=False,
                 estimate_shifts=False)
    err = np.linalg.norm(res.image - truth) / np.linalg.norm(truth)
    assert err < 0.01
    assert len(res.passes) == 2 and len(res.pass_times) == 2
    assert res.runtime_s == pytest.approx(sum(res.pass_times))
    assert res.weights.shape == (4, 48, 48)


def test_sprite_stage_labels():
    stack = LRStack.from_cube(np.zeros((2, 16, 16)), 2)
    with pytest.raises(EstimationError, match="parameter estimation"):
        sprite(stack, SolverConfig(n_scales=2))


def test_sprite_monte_carlo_mode_runs():
    truth = small_truth(16)
    stack, _ = synthesize_stack(truth, SimSpec(lr_size=16, snr_db=30), rng=np.random.default_rng(11))
    cfg = SolverConfig(n_scales=2, n_max=20, k_max=1, lambda_calibration="monte-carlo",
                       mc_realizations=10)
    res = sprite(stack, cfg, estimate_noise=False, estimate_flux=False, estimate_shifts=False)
    assert res.image.min() >= -1e-9 * res.image.max()


def test_median_first_guess_on_phases():
    truth = small_truth(16)
    stack = phase_stack(truth)
    # zero-shift exposure is interpolated exactly at its own samples
    med = median_first_guess(LRStack.from_cube(stack.cube[:1], 2))
    np.testing.assert_allclose(decimate(med, 2), stack.cube[0], atol=1e-12)


def test_quadratic_baseline_examples():
    rng = np.random.default_rng(12)
    truth = small_truth(8)
    stack = LRStack.from_cube(np.array([truth[a::2, b::2] for a in range(2) for b in range(2)])
                              + 0.01 * rng.standard_normal((4, 8, 8)), 2,
                              sigmas=[0.01] * 4, shifts=[(0, 0), (-0.5, 0.1), (0.2, -0.5), (-0.3, -0.3)])
    x0 = median_first_guess(stack)
    np.testing.assert_allclose(quadratic_baseline(stack, reg_lambda=1e12), x0, atol=1e-6)
    out, info = quadratic_baseline(stack, reg_lambda=0.0, return_info=True)
    op = ObservationOperator.from_stack(stack)
    A = op.dense()
    z = op.data_vector(stack).ravel()
    dense = np.linalg.lstsq(A, z - A @ x0.ravel(), rcond=None)[0]
    np.testing.assert_allclose(info["delta"].ravel(), dense, atol=1e-6 * np.abs(dense).max())
    lam = 0.3
    out, info = quadratic_baseline(stack, reg_lambda=lam, return_info=True)
    d = info["delta"]
    r = op.normal(d) + 2 * lam * d - info["rhs"]
    assert abs(np.vdot(r, d)) < 1e-8 * np.linalg.norm(info["rhs"]) * np.linalg.norm(d)
    with pytest.raises(InputError):
        quadratic_baseline(stack, reg_lambda=-1.0)
