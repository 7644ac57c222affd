"""Automatic data-fidelity parameters: noise level, sub-pixel shifts, flux."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import EstimationError, InputError
from .image import LRStack
from .wavelets import MAD_TO_SIGMA, mad

logger = logging.getLogger(__name__)

__all__ = [
    "EstimationReport",
    "estimate_sigma_mad",
    "centroid_threshold",
    "estimate_centroid",
    "estimate_shifts",
    "estimate_flux",
    "estimate_parameters",
]

GAUSS_IQR = 1.3489795
SIGMA_FLOOR = 1e-8
# narrower windows let the pixel phase of an undersampled PSF bias the centroid
MIN_WINDOW_SIGMA = 1.5


@dataclass
class EstimationReport:
    sigmas: list
    shifts: list
    fluxes: list
    centroids: list
    aperture_radius: float = 3.0

    def __post_init__(self):
        if any(s <= 0 for s in self.sigmas):
            raise EstimationError("estimated noise levels must be positive")
        if any(f <= 0 for f in self.fluxes):
            raise EstimationError("estimated fluxes must be positive")

    @property
    def relative_fluxes(self):
        """Fluxes normalized to the reference exposure."""
        return [f / self.fluxes[0] for f in self.fluxes]


def estimate_sigma_mad(image) -> float:
    """``1.4826 * MAD`` of the pixel values.

    Returns 0 for a constant image; callers treat that as degenerate input.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.size < 2:
        raise InputError("need at least two pixels to estimate the noise")
    sigma = MAD_TO_SIGMA * mad(image)
    if sigma == 0.0:
        logger.warning("zero MAD: image is (nearly) constant")
    return sigma


def centroid_threshold(image, sigma: float) -> float:
    """``min(4 sigma, (max|x| / sigma - 1) sigma)``."""
    if not sigma > 0:
        raise InputError("sigma must be positive")
    peak = float(np.max(np.abs(image)))
    return min(4.0 * sigma, (peak / sigma - 1.0) * sigma)


def _weighted_quartile_width(profile) -> float:
    cdf = np.concatenate([[0.0], np.cumsum(profile)])
    cdf /= cdf[-1]
    edges = np.arange(cdf.size) - 0.5
    q1, q3 = np.interp([0.25, 0.75], cdf, edges)
    return q3 - q1


def estimate_centroid(image, sigma: float, window_sigma: float | None = None,
                      tol: float = 1e-4, max_iter: int = 50):
    """Sub-pixel centroid ``(row, col)`` by iteratively Gaussian-weighted moments.

    Pixels below :func:`centroid_threshold` are zeroed first. The Gaussian
    window width defaults to the quartile-based width of the thresholded blob,
    but never less than ``MIN_WINDOW_SIGMA`` pixels.
    """
    image = np.asarray(image, dtype=np.float64)
    kept = np.where(image > centroid_threshold(image, sigma), image, 0.0)
    total = kept.sum()
    if not total > 0:
        raise EstimationError("no pixel above the centroiding threshold")
    ii, jj = np.indices(image.shape, dtype=np.float64)
    ci = float((ii * kept).sum() / total)
    cj = float((jj * kept).sum() / total)
    if window_sigma is None:
        wi = _weighted_quartile_width(kept.sum(axis=1))
        wj = _weighted_quartile_width(kept.sum(axis=0))
        window_sigma = max(0.5 * (wi + wj) / GAUSS_IQR, MIN_WINDOW_SIGMA)
    inv = 0.5 / window_sigma ** 2
    for _ in range(max_iter):
        w = kept * np.exp(-((ii - ci) ** 2 + (jj - cj) ** 2) * inv)
        sw = w.sum()
        if not sw > 0:
            raise EstimationError("weighted flux vanished during centroiding")
        ni, nj = float((ii * w).sum() / sw), float((jj * w).sum() / sw)
        moved = np.hypot(ni - ci, nj - cj)
        ci, cj = ni, nj
        if moved < tol:
            break
    return ci, cj


def estimate_shifts(stack: LRStack, sigmas=None):
    """Centroid offsets of every exposure relative to exposure 0 (LR pixels)."""
    sigmas = stack.sigmas if sigmas is None else sigmas
    cents = []
    for k, e in enumerate(stack.exposures):
        try:
            cents.append(estimate_centroid(e.image, sigmas[k]))
        except EstimationError as exc:
            raise EstimationError(str(exc), index=k) from exc
    c0 = cents[0]
    return [(c[0] - c0[0], c[1] - c0[1]) for c in cents]


def estimate_flux(image, centroid, radius: float = 3.0) -> float:
    """Sum of the pixels whose centers lie within ``radius`` of ``centroid``."""
    image = np.asarray(image, dtype=np.float64)
    ii, jj = np.indices(image.shape)
    inside = (ii - centroid[0]) ** 2 + (jj - centroid[1]) ** 2 <= radius ** 2
    if not inside.any():
        raise EstimationError("aperture contains no pixel")
    flux = float(image[inside].sum())
    if not flux > 0:
        raise EstimationError(f"non-positive aperture flux {flux:g}")
    return flux


def estimate_parameters(stack: LRStack, noise=True, flux=True, shifts=True,
                        sigma: float | None = None, radius: float = 3.0) -> EstimationReport:
    """Fill in noise levels, shifts and fluxes for a stack.

    Quantities that are not estimated come from the stack itself, except
    that a user ``sigma`` overrides every exposure's noise level.
    """
    sigmas = []
    for k, e in enumerate(stack.exposures):
        if noise:
            s = estimate_sigma_mad(e.image)
            floor = SIGMA_FLOOR * float(np.max(np.abs(e.image)))
            if s <= floor:
                logger.warning("exposure %d: noise estimate %.3g floored to %.3g", k, s, floor)
                s = floor
            if not s > 0:
                raise EstimationError("cannot estimate noise of an all-zero image", index=k)
        else:
            s = float(sigma) if sigma is not None else e.sigma
        sigmas.append(s)
    centroids = []
    for k, e in enumerate(stack.exposures if (shifts or flux) else ()):
        try:
            centroids.append(estimate_centroid(e.image, sigmas[k]))
        except EstimationError as exc:
            raise EstimationError(str(exc), index=k) from exc
    if shifts:
        c0 = centroids[0]
        shift_list = [(c[0] - c0[0], c[1] - c0[1]) for c in centroids]
    else:
        shift_list = list(stack.shifts)
    if flux:
        fluxes = []
        for k, e in enumerate(stack.exposures):
            try:
                fluxes.append(estimate_flux(e.image, centroids[k], radius))
            except EstimationError as exc:
                raise EstimationError(str(exc), index=k) from exc
    else:
        fluxes = list(stack.fluxes)
    return EstimationReport(sigmas, shift_list, fluxes, centroids, radius)
