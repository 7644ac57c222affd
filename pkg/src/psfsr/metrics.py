"""Shape and quality measurements for PSF images."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .exceptions import InputError

logger = logging.getLogger(__name__)

__all__ = [
    "ShapeMeasurement",
    "MetricError",
    "weighted_moments",
    "ellipticity",
    "measure_shape",
    "fwhm_lorentzian",
    "mean_abs_ellipticity_error",
    "pearson_correlation",
    "error_map_stats",
]

DEFAULT_WEIGHT_SIGMA = 7.5


class MetricError(ValueError):
    """A measurement is undefined for the given image."""


@dataclass(frozen=True)
class ShapeMeasurement:
    e1: float
    e2: float
    centroid: tuple
    fwhm: float
    moments: tuple


def _image(x, name="image"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {x.shape}")
    return x


def weighted_moments(image, weight_sigma: float | None = DEFAULT_WEIGHT_SIGMA,
                     max_iter: int = 20, tol: float = 1e-8):
    """Second-order central moments under a Gaussian window.

    The window is centered on the weighted centroid, iterated to
    consistency. ``weight_sigma=None`` gives uniform weights (plain
    moments). Moments are normalized by the weighted flux.

    Returns
    -------
    mu20, mu02, mu11 : float
        ``mu20`` is along axis 0.
    centroid : (float, float)
    """
    x = _image(image)
    ii, jj = np.indices(x.shape, dtype=np.float64)
    flux = x.sum()
    if not flux > 0:
        raise MetricError("image has non-positive flux")
    ci, cj = float((ii * x).sum() / flux), float((jj * x).sum() / flux)
    w = np.ones_like(x)
    if weight_sigma is not None:
        if not weight_sigma > 0:
            raise InputError("weight_sigma must be positive")
        inv = 0.5 / weight_sigma ** 2
        for _ in range(max_iter):
            w = np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) * inv)
            wf = (w * x).sum()
            if not wf > 0:
                raise MetricError("non-positive weighted flux")
            ni, nj = float((ii * w * x).sum() / wf), float((jj * w * x).sum() / wf)
            done = np.hypot(ni - ci, nj - cj) < tol
            ci, cj = ni, nj
            if done:
                break
        w = np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) * inv)
    wx = w * x
    total = wx.sum()
    if not total > 0:
        raise MetricError("non-positive weighted flux")
    di, dj = ii - ci, jj - cj
    mu20 = float((di * di * wx).sum() / total)
    mu02 = float((dj * dj * wx).sum() / total)
    mu11 = float((di * dj * wx).sum() / total)
    return mu20, mu02, mu11, (ci, cj)


def ellipticity(moments):
    """``(e1, e2) = ((mu20 - mu02), 2 mu11) / (mu20 + mu02)``."""
    mu20, mu02, mu11 = moments[:3]
    den = mu20 + mu02
    if den == 0:
        raise MetricError("mu20 + mu02 is zero")
    return (mu20 - mu02) / den, 2.0 * mu11 / den


def _lorentzian(params, ii, jj):
    amp, ci, cj, a, b, theta, beta = params
    c, s = np.cos(theta), np.sin(theta)
    u = c * (ii - ci) + s * (jj - cj)
    v = -s * (ii - ci) + c * (jj - cj)
    r2 = (u / a) ** 2 + (v / b) ** 2
    return amp / (1.0 + r2 ** (beta / 2.0))


def fwhm_lorentzian(image, core_fraction: float = 0.2, max_iter: int = 200,
                    return_params=False):
    """FWHM from a least-squares elliptical modified-Lorentzian fit.

    The model is ``A / (1 + r^beta)`` with ``r`` the elliptical radius of
    semi-axes ``(a, b)``; it falls to half its peak at ``r = 1``, so the
    FWHM is ``2 sqrt(a b)``. Only pixels above ``core_fraction`` of the
    peak enter the fit, so the power-law wings do not bias the core width.
    """
    x = _image(image)
    peak = float(x.max())
    if not peak > 0:
        raise MetricError("image has no positive peak")
    xn = x / peak
    ii, jj = np.indices(x.shape, dtype=np.float64)
    mu20, mu02, mu11, (ci, cj) = weighted_moments(np.maximum(xn, 0.0), None)
    pi, pj = np.unravel_index(np.argmax(x), x.shape)
    half_cnt = np.count_nonzero(xn >= 0.5)
    hw = max(np.sqrt(half_cnt / np.pi), 0.5)
    theta0 = 0.5 * np.arctan2(2 * mu11, mu20 - mu02)
    p0 = np.array([1.0, float(pi), float(pj), hw, hw, theta0, 2.0])
    # a bounded amplitude keeps the fit from collapsing onto a power-law cusp
    lower = [0.5, 0.0, 0.0, 0.05, 0.05, -np.pi, 0.5]
    upper = [2.0, x.shape[0] - 1.0, x.shape[1] - 1.0, 10 * x.shape[0], 10 * x.shape[1], np.pi, 20.0]
    p0 = np.clip(p0, np.array(lower) + 1e-9, np.array(upper) - 1e-9)

    core = xn >= core_fraction
    if np.count_nonzero(core) < 8:
        core = xn >= min(core_fraction, 0.5) * 0.25
    ii, jj, xn = ii[core], jj[core], xn[core]

    def resid(p):
        return _lorentzian(p, ii, jj) - xn

    fit = least_squares(resid, p0, bounds=(lower, upper), max_nfev=max_iter * len(p0),
                        method="trf")
    if not fit.success:
        raise MetricError(f"Lorentzian fit did not converge: {fit.message} "
                          f"(cost {fit.cost:.3g}, nfev {fit.nfev})")
    a, b = fit.x[3], fit.x[4]
    fwhm = 2.0 * float(np.sqrt(a * b))
    return (fwhm, fit.x) if return_params else fwhm


def measure_shape(image, weight_sigma: float | None = DEFAULT_WEIGHT_SIGMA) -> ShapeMeasurement:
    mu20, mu02, mu11, cen = weighted_moments(image, weight_sigma)
    e1, e2 = ellipticity((mu20, mu02, mu11))
    return ShapeMeasurement(e1, e2, cen, fwhm_lorentzian(image), (mu20, mu02, mu11))


def mean_abs_ellipticity_error(truths, recons, weight_sigma: float | None = DEFAULT_WEIGHT_SIGMA):
    """Mean absolute ellipticity errors and their (population) standard deviations.

    Items of ``truths``/``recons`` may be images or precomputed ``(e1, e2)``
    pairs.

    Returns
    -------
    E1, E2, std1, std2 : float
    """
    truths, recons = list(truths), list(recons)
    if len(truths) != len(recons):
        raise InputError(f"length mismatch: {len(truths)} truths, {len(recons)} reconstructions")
    if not truths:
        raise InputError("need at least one pair")

    def pair(item):
        a = np.asarray(item, dtype=np.float64)
        if a.shape == (2,):
            return a
        return np.array(ellipticity(weighted_moments(a, weight_sigma)))

    err = np.abs(np.array([pair(t) for t in truths]) - np.array([pair(r) for r in recons]))
    mean = err.mean(axis=0)
    std = err.std(axis=0)
    return float(mean[0]), float(mean[1]), float(std[0]), float(std[1])


def pearson_correlation(a, b) -> float:
    a = _image(a, "a").ravel()
    b = _image(b, "b").ravel()
    if a.shape != b.shape:
        raise InputError("images must have the same shape")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise MetricError("correlation is undefined for a constant image")
    return float(np.clip(np.corrcoef(a, b)[0, 1], -1.0, 1.0))


def error_map_stats(truth, recon):
    """``|truth - recon|`` and its standard deviation."""
    truth = _image(truth, "truth")
    recon = _image(recon, "recon")
    if truth.shape != recon.shape:
        raise InputError(f"shape mismatch: {truth.shape} vs {recon.shape}")
    err = np.abs(truth - recon)
    return err, float(err.std())
