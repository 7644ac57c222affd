"""Synthetic PSFs and low-resolution stacks with controlled shifts and noise."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError
from .image import LRStack
from .operator import predict_exposure

logger = logging.getLogger(__name__)

__all__ = [
    "SimSpec",
    "PSF_KINDS",
    "make_psf",
    "random_psf_params",
    "snr_signal_level",
    "noise_sigma",
    "draw_shifts",
    "synthesize_stack",
]

PSF_KINDS = ("elliptical-gaussian", "obscured-airy")
SNR_WINDOW = 50


@dataclass(frozen=True)
class SimSpec:
    """Layout of a simulated experiment.

    ``hr_dims`` defaults to ``(d * lr_size, d * lr_size)``. Set ``snr_db`` to
    ``inf`` for noise-free stacks. With ``reference_zero`` the first exposure
    has no shift, so the HR truth frame is the reference frame used by the
    shift estimator.
    """

    psf_kind: str = "elliptical-gaussian"
    lr_size: int = 84
    n_exposures: int = 4
    d: int = 2
    snr_db: float = 30.0
    seed: int = 0
    reference_zero: bool = True

    def __post_init__(self):
        if self.psf_kind not in PSF_KINDS:
            raise InputError(f"psf_kind must be one of {PSF_KINDS}")
        if self.n_exposures < 1:
            raise InputError("n_exposures must be >= 1")
        if self.d < 1 or self.lr_size < 1:
            raise InputError("d and lr_size must be >= 1")
        if np.isnan(self.snr_db) or self.snr_db == -np.inf:
            raise InputError("snr_db must be a number or +inf")

    @property
    def hr_dims(self):
        return (self.d * self.lr_size, self.d * self.lr_size)


def _grid(dims, center):
    ii, jj = np.indices(dims, dtype=np.float64)
    ci = (dims[0] - 1) / 2.0 if center is None else center[0]
    cj = (dims[1] - 1) / 2.0 if center is None else center[1]
    return ii - ci, jj - cj


def _gaussian(dims, sigma_x=3.0, sigma_y=3.0, theta=0.0, center=None):
    if not (sigma_x > 0 and sigma_y > 0):
        raise InputError("Gaussian widths must be positive")
    di, dj = _grid(dims, center)
    # x runs along axis 0; theta rotates from axis 0 toward axis 1
    c, s = np.cos(theta), np.sin(theta)
    u = c * di + s * dj
    v = -s * di + c * dj
    return np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))


def _airy(dims, sampling=2.75, obscuration=0.3, spider_width=0.02, n_vanes=3,
          spider_angle=0.0, aberrations=(0.0, 0.0, 0.0), center=None, pupil_size=None):
    """``|FFT(pupil)|^2`` of an obscured aperture with a spider.

    ``sampling`` is the number of image pixels per ``lambda / D``.
    ``aberrations`` are astigmatism (0 and 45 degrees) and defocus
    amplitudes in waves.
    """
    if not sampling >= 2.0:
        raise InputError("sampling must be at least 2 pixels per lambda/D (Nyquist)")
    if not 0 <= obscuration < 1:
        raise InputError("obscuration must lie in [0, 1)")
    n = pupil_size or int(2 ** np.ceil(np.log2(max(dims) * 2)))
    diam = n / sampling
    y, x = _grid((n, n), ((n - 1) / 2.0, (n - 1) / 2.0))
    r = np.hypot(x, y) / (diam / 2)
    phi = np.arctan2(y, x)
    pupil = ((r <= 1.0) & (r >= obscuration)).astype(np.float64)
    for k in range(n_vanes):
        a = spider_angle + 2 * np.pi * k / n_vanes
        along = x * np.cos(a) + y * np.sin(a)
        across = -x * np.sin(a) + y * np.cos(a)
        pupil[(np.abs(across) < spider_width * diam / 2) & (along > 0)] = 0.0
    a0, a45, defocus = aberrations
    wave = a0 * r ** 2 * np.cos(2 * phi) + a45 * r ** 2 * np.sin(2 * phi) + defocus * (2 * r ** 2 - 1)
    field = pupil * np.exp(2j * np.pi * wave)
    psf = np.abs(np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(field)))) ** 2
    # sub-pixel re-centering by a Fourier phase ramp keeps the sampling exact
    ci = (dims[0] - 1) / 2.0 if center is None else center[0]
    cj = (dims[1] - 1) / 2.0 if center is None else center[1]
    oi, oj = ci - dims[0] // 2, cj - dims[1] // 2
    if oi or oj:
        f = np.fft.fftfreq(n)
        ramp = np.exp(-2j * np.pi * (f[:, None] * oi + f[None, :] * oj))
        psf = np.abs(np.fft.ifft2(np.fft.fft2(psf) * ramp))
    i0, j0 = n // 2 - dims[0] // 2, n // 2 - dims[1] // 2
    return np.maximum(psf[i0:i0 + dims[0], j0:j0 + dims[1]], 0.0)


def make_psf(kind: str, params: dict | None = None, dims=(168, 168)) -> np.ndarray:
    """Peak-normalized, non-negative HR PSF.

    Parameters
    ----------
    kind : {"elliptical-gaussian", "obscured-airy"}
    params : dict, optional
        Gaussian: ``sigma_x``, ``sigma_y``, ``theta``, ``center``.
        Airy: ``sampling``, ``obscuration``, ``spider_width``, ``n_vanes``,
        ``spider_angle``, ``aberrations``, ``center``.
    dims : tuple of int
    """
    params = dict(params or {})
    dims = (int(dims[0]), int(dims[1]))
    if min(dims) < 1:
        raise InputError("dims must be positive")
    try:
        if kind == "elliptical-gaussian":
            psf = _gaussian(dims, **params)
        elif kind == "obscured-airy":
            psf = _airy(dims, **params)
        else:
            raise InputError(f"unknown PSF kind {kind!r}")
    except TypeError as exc:
        raise InputError(f"invalid parameters for {kind}: {exc}") from exc
    peak = psf.max()
    if not peak > 0:
        raise InputError("PSF is identically zero")
    return psf / peak


def random_psf_params(kind: str, rng: np.random.Generator, d: int = 2) -> dict:
    """Randomized PSF parameters; widths scale with ``d`` so the LR PSF stays undersampled."""
    if kind == "elliptical-gaussian":
        base = rng.uniform(0.7, 1.1) * d
        e = rng.uniform(0.0, 0.3)
        return {"sigma_x": base * (1 + e), "sigma_y": base * (1 - e) if e < 1 else base,
                "theta": rng.uniform(0, np.pi)}
    if kind == "obscured-airy":
        return {"sampling": 1.4 * d, "obscuration": rng.uniform(0.2, 0.35),
                "spider_angle": rng.uniform(0, 2 * np.pi / 3),
                "aberrations": tuple(rng.normal(0.0, 0.08, size=3))}
    raise InputError(f"unknown PSF kind {kind!r}")


def snr_signal_level(hr) -> float:
    """Variance of the 50x50 window centered on the peak pixel (clipped to the image)."""
    hr = np.asarray(hr, dtype=np.float64)
    if hr.ndim != 2 or min(hr.shape) < SNR_WINDOW:
        raise InputError(f"image must be at least {SNR_WINDOW}x{SNR_WINDOW}")
    pi, pj = np.unravel_index(np.argmax(hr), hr.shape)
    half = SNR_WINDOW // 2
    i0 = int(np.clip(pi - half, 0, hr.shape[0] - SNR_WINDOW))
    j0 = int(np.clip(pj - half, 0, hr.shape[1] - SNR_WINDOW))
    return float(np.var(hr[i0:i0 + SNR_WINDOW, j0:j0 + SNR_WINDOW]))


def noise_sigma(signal_level: float, snr_db: float) -> float:
    """Noise std for ``snr_db = 10 log10(signal_level / sigma^2)``."""
    if snr_db == np.inf:
        return 0.0
    return float(np.sqrt(signal_level / 10.0 ** (snr_db / 10.0)))


def draw_shifts(rng, n, reference_zero=True):
    shifts = rng.uniform(-0.5, 0.5, size=(n, 2))
    if reference_zero:
        shifts[0] = 0.0
    return [tuple(map(float, s)) for s in shifts]


def synthesize_stack(truth_hr, spec: SimSpec, rng=None, shifts=None):
    """Warp, decimate and add white noise to an HR image.

    Parameters
    ----------
    truth_hr : ndarray
        HR image of shape ``spec.hr_dims``.
    spec : SimSpec
    rng : numpy.random.Generator, optional
        Defaults to ``default_rng(spec.seed)``.
    shifts : list of (float, float), optional
        Fixed shifts instead of random draws.

    Returns
    -------
    stack : LRStack
        Exposures carrying the true sigma, unit flux and true shifts.
    truth : dict
        ``shifts``, ``fluxes``, ``sigma`` and ``signal_level``.
    """
    truth_hr = np.asarray(truth_hr, dtype=np.float64)
    if truth_hr.shape != spec.hr_dims:
        raise InputError(f"truth has shape {truth_hr.shape}, expected {spec.hr_dims}")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    n = spec.n_exposures
    if shifts is None:
        shifts = draw_shifts(rng, n, spec.reference_zero)
    elif len(shifts) != n:
        raise InputError("need one shift per exposure")
    level = snr_signal_level(truth_hr) if min(truth_hr.shape) >= SNR_WINDOW else float(np.var(truth_hr))
    sigma = noise_sigma(level, spec.snr_db)
    cube = np.empty((n, spec.lr_size, spec.lr_size))
    for k in range(n):
        cube[k] = predict_exposure(truth_hr, shifts[k], spec.d)
        if sigma > 0:
            cube[k] += sigma * rng.standard_normal(cube[k].shape)
    # a noise-free stack still needs a positive sigma for the whitened model
    sig = sigma if sigma > 0 else 1.0
    stack = LRStack.from_cube(cube, spec.d, sigmas=[sig] * n, fluxes=[1.0] * n, shifts=shifts,
                              meta={"snr_db": spec.snr_db, "seed": spec.seed})
    truth = {"shifts": list(shifts), "fluxes": [1.0] * n, "sigma": sigma, "signal_level": level}
    return stack, truth
