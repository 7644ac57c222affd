"""Undecimated wavelet dictionaries used as analysis operators.

Two transforms are provided, both computed with the a-trous algorithm and
mirror boundaries:

``starlet2``
    Second-generation starlet. With ``H_j`` the B3-spline smoothing dilated
    by ``2**j``::

        c[j+1] = H_j c[j]
        w[j]   = c[j] - H_j c[j+1]

    Reconstruction ``c[j] = H_j c[j+1] + w[j]`` uses only positive filters.

``bior79``
    Undecimated separable CDF 9/7 filter bank. Each level produces three
    oriented detail bands (lowpass/highpass along rows/columns) and the
    coarse approximation. Synthesis filters are halved so that
    ``H Ht + G Gt = 1`` holds at every dilation without downsampling.

Coefficients are stored as an ``(n_bands, height, width)`` array whose last
band is the coarse approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from ._kernels import filter_axis, filter2d
from .exceptions import InputError
from .operator import spectral_radius

__all__ = [
    "DICTIONARIES",
    "TRANSFORM_CODES",
    "Starlet2",
    "UndecimatedBior79",
    "WaveletCoeffs",
    "get_dictionary",
    "analyze",
    "synthesize_adjoint",
    "reconstruct",
    "threshold_coeffs",
    "soft_threshold",
    "hard_threshold",
    "mad",
    "scale_noise_from_white",
    "correlated_scale_noise",
]

MAD_TO_SIGMA = 1.4826

B3_SPLINE = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

# CDF 9/7, analysis lowpass normalized to unit DC gain.
CDF97_LO = np.array([
    0.02674875741080976, -0.01686411844287495, -0.07822326652898785,
    0.2668641184428723, 0.6029490182363579, 0.2668641184428723,
    -0.07822326652898785, -0.01686411844287495, 0.02674875741080976,
])
CDF97_HI = np.array([
    0.09127176311424948, -0.05754352622849957, -0.5912717631142470,
    1.115087052456994, -0.5912717631142470, -0.05754352622849957,
    0.09127176311424948,
])
CDF97_SYN_LO = np.array([
    -0.09127176311424948, -0.05754352622849957, 0.5912717631142470,
    1.115087052456994, 0.5912717631142470, -0.05754352622849957,
    -0.09127176311424948,
]) / 2.0
CDF97_SYN_HI = np.array([
    0.02674875741080976, 0.01686411844287495, -0.07822326652898785,
    -0.2668641184428723, 0.6029490182363579, -0.2668641184428723,
    -0.07822326652898785, 0.01686411844287495, 0.02674875741080976,
]) / 2.0


class Dictionary:
    """Base class: a linear analysis operator with an exact left inverse."""

    name = ""
    max_radius = 0

    def __init__(self, shape, n_scales):
        shape = (int(shape[0]), int(shape[1]))
        n_scales = int(n_scales)
        if n_scales < 1:
            raise InputError("need at least one wavelet scale")
        if min(shape) < 2 ** n_scales or min(shape) < 2:
            raise InputError(f"{n_scales} scales are too many for an image of shape {shape}")
        self.shape = shape
        self.n_scales = n_scales

    @property
    def n_bands(self) -> int:
        return len(self.band_scale)

    @property
    def band_scale(self) -> tuple:
        raise NotImplementedError

    @property
    def coeff_shape(self):
        return (self.n_bands,) + self.shape

    def _check_image(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.shape:
            raise InputError(f"image shape {x.shape} does not match dictionary shape {self.shape}")
        return x

    def _check_coeffs(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != self.coeff_shape:
            raise InputError(f"coefficient shape {u.shape} does not match {self.coeff_shape}")
        return u

    @cached_property
    def frame_bound(self) -> float:
        """``rho(Phi Phi^T)``, the Lipschitz constant of the prox inner loop."""
        return spectral_radius(lambda x: self.adjoint(self.analyze(x)), self.shape).value

    @cached_property
    def white_noise_std(self) -> np.ndarray:
        """Per-band std of the analysis of unit white noise.

        Computed exactly as the l2 norm of each band's equivalent filter at
        the image center, where mirror boundaries play no role.
        """
        ci, cj = self.shape[0] // 2, self.shape[1] // 2
        out = np.empty(self.n_bands)
        for b in range(self.n_bands):
            u = np.zeros(self.coeff_shape)
            u[b, ci, cj] = 1.0
            out[b] = np.linalg.norm(self.adjoint(u))
        out.flags.writeable = False
        return out


class Starlet2(Dictionary):
    name = "starlet2"

    @property
    def band_scale(self):
        return tuple(range(self.n_scales + 1))

    @staticmethod
    def _smooth(x, j, transpose=False):
        return filter2d(x, B3_SPLINE, B3_SPLINE, 2 ** j, transpose)

    def analyze(self, x):
        c = self._check_image(x)
        out = np.empty(self.coeff_shape)
        for j in range(self.n_scales):
            c1 = self._smooth(c, j)
            out[j] = c - self._smooth(c1, j)
            c = c1
        out[-1] = c
        return out

    def adjoint(self, u):
        u = self._check_coeffs(u)
        b = u[-1].copy()
        for j in reversed(range(self.n_scales)):
            b = self._smooth(b - self._smooth(u[j], j, True), j, True) + u[j]
        return b

    def reconstruct(self, u):
        u = self._check_coeffs(u)
        c = u[-1].copy()
        for j in reversed(range(self.n_scales)):
            c = self._smooth(c, j) + u[j]
        return c


class UndecimatedBior79(Dictionary):
    name = "bior79"

    @property
    def band_scale(self):
        return tuple(j for j in range(self.n_scales) for _ in range(3)) + (self.n_scales,)

    def analyze(self, x):
        c = self._check_image(x)
        out = np.empty(self.coeff_shape)
        for j in range(self.n_scales):
            step = 2 ** j
            lo = filter_axis(c, CDF97_LO, step, 0)
            hi = filter_axis(c, CDF97_HI, step, 0)
            out[3 * j] = filter_axis(lo, CDF97_HI, step, 1)
            out[3 * j + 1] = filter_axis(hi, CDF97_LO, step, 1)
            out[3 * j + 2] = filter_axis(hi, CDF97_HI, step, 1)
            c = filter_axis(lo, CDF97_LO, step, 1)
        out[-1] = c
        return out

    def adjoint(self, u):
        u = self._check_coeffs(u)
        b = u[-1].copy()
        for j in reversed(range(self.n_scales)):
            step = 2 ** j
            lo = filter_axis(b, CDF97_LO, step, 1, True) + filter_axis(u[3 * j], CDF97_HI, step, 1, True)
            hi = (filter_axis(u[3 * j + 1], CDF97_LO, step, 1, True)
                  + filter_axis(u[3 * j + 2], CDF97_HI, step, 1, True))
            b = filter_axis(lo, CDF97_LO, step, 0, True) + filter_axis(hi, CDF97_HI, step, 0, True)
        return b

    def reconstruct(self, u):
        u = self._check_coeffs(u)
        c = u[-1].copy()
        for j in reversed(range(self.n_scales)):
            step = 2 ** j
            lo = filter_axis(c, CDF97_SYN_LO, step, 1) + filter_axis(u[3 * j], CDF97_SYN_HI, step, 1)
            hi = (filter_axis(u[3 * j + 1], CDF97_SYN_LO, step, 1)
                  + filter_axis(u[3 * j + 2], CDF97_SYN_HI, step, 1))
            c = filter_axis(lo, CDF97_SYN_LO, step, 0) + filter_axis(hi, CDF97_SYN_HI, step, 0)
        return c


DICTIONARIES = {"starlet2": Starlet2, "bior79": UndecimatedBior79}
TRANSFORM_CODES = {2: "starlet2", 24: "bior79"}


@lru_cache(maxsize=32)
def get_dictionary(dictionary_id: str = "starlet2", shape=(64, 64), n_scales: int = 4) -> Dictionary:
    """Shared dictionary instance for a given id, image shape and scale count."""
    try:
        cls = DICTIONARIES[dictionary_id]
    except KeyError:
        raise InputError(f"unknown dictionary {dictionary_id!r}; "
                         f"choose from {sorted(DICTIONARIES)}") from None
    return cls(tuple(shape), n_scales)


@dataclass
class WaveletCoeffs:
    """Analysis coefficients, one raster per band, coarse band last.

    For ``starlet2`` bands and scales coincide; ``bior79`` has three
    oriented bands per scale. ``sigma_per_band`` and ``weights`` are
    optional annotations filled by noise estimation and reweighting.
    """

    bands: np.ndarray
    dictionary_id: str
    n_scales: int
    sigma_per_band: np.ndarray | None = None
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=np.float64)
        if self.sigma_per_band is not None and np.any(np.asarray(self.sigma_per_band) < 0):
            raise InputError("noise levels must be non-negative")
        if self.weights is not None:
            w = np.asarray(self.weights)
            if np.any(w <= 0) or np.any(w > 1):
                raise InputError("weights must lie in (0, 1]")

    @property
    def dictionary(self) -> Dictionary:
        return get_dictionary(self.dictionary_id, self.bands.shape[1:], self.n_scales)

    @property
    def details(self) -> np.ndarray:
        return self.bands[:-1]

    @property
    def coarse(self) -> np.ndarray:
        return self.bands[-1]

    def replace(self, bands) -> "WaveletCoeffs":
        return WaveletCoeffs(bands, self.dictionary_id, self.n_scales,
                             self.sigma_per_band, self.weights)


def analyze(image, dictionary_id: str = "starlet2", n_scales: int = 4) -> WaveletCoeffs:
    """Analysis ``Phi x`` with the named dictionary."""
    image = np.asarray(image, dtype=np.float64)
    dico = get_dictionary(dictionary_id, image.shape, n_scales)
    return WaveletCoeffs(dico.analyze(image), dictionary_id, n_scales)


def synthesize_adjoint(coeffs: WaveletCoeffs) -> np.ndarray:
    """Exact adjoint ``Phi^T u`` (not the inverse transform)."""
    return coeffs.dictionary.adjoint(coeffs.bands)


def reconstruct(coeffs: WaveletCoeffs) -> np.ndarray:
    """Left inverse of :func:`analyze`."""
    return coeffs.dictionary.reconstruct(coeffs.bands)


def _broadcast_thresholds(thresholds, coeff_shape):
    t = np.asarray(thresholds, dtype=np.float64)
    nb = coeff_shape[0]
    if t.ndim == 1 and t.size in (nb, nb - 1):
        t = np.concatenate([t, np.zeros(nb - t.size)])[:, None, None]
    t = np.array(np.broadcast_to(t, coeff_shape))
    if np.any(t < 0):
        raise InputError("thresholds must be non-negative")
    t[-1] = 0.0
    return t


def soft_threshold(alpha, thresholds):
    """``(1 - t/|a|)_+ a`` component-wise."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return np.sign(alpha) * np.maximum(np.abs(alpha) - thresholds, 0.0)


def hard_threshold(alpha, thresholds):
    """Keep ``a`` where ``|a| >= t``, zero elsewhere."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return np.where(np.abs(alpha) >= thresholds, alpha, 0.0)


def threshold_coeffs(coeffs, thresholds, mode: str = "soft"):
    """Soft- or hard-threshold every detail band; the coarse band is kept.

    ``thresholds`` may be a scalar, one value per band (or per detail band),
    or one value per coefficient. Accepts a :class:`WaveletCoeffs` or a raw
    ``(n_bands, h, w)`` array and returns the same kind.
    """
    bands = coeffs.bands if isinstance(coeffs, WaveletCoeffs) else np.asarray(coeffs, dtype=np.float64)
    t = _broadcast_thresholds(thresholds, bands.shape)
    if mode == "soft":
        out = soft_threshold(bands, t)
    elif mode == "hard":
        out = hard_threshold(bands, t)
    else:
        raise InputError(f"unknown thresholding mode {mode!r}")
    out[-1] = bands[-1]
    return coeffs.replace(out) if isinstance(coeffs, WaveletCoeffs) else out


def mad(values) -> float:
    """Median absolute deviation about the median."""
    values = np.asarray(values, dtype=np.float64).ravel()
    return float(np.median(np.abs(values - np.median(values))))


def scale_noise_from_white(sigma_pixel: float, dictionary_id: str = "starlet2",
                           n_scales: int = 4, shape=(64, 64)) -> np.ndarray:
    """Per-band noise std produced by white noise of std ``sigma_pixel``."""
    if sigma_pixel < 0:
        raise InputError("sigma_pixel must be non-negative")
    return sigma_pixel * get_dictionary(dictionary_id, tuple(shape), n_scales).white_noise_std


def correlated_scale_noise(coeffs, k_thresh: float = 5.0, max_iter: int = 5, rtol: float = 1e-3):
    """Robust per-band noise std for correlated noise.

    Starting from ``1.4826 * MAD`` of the band, the band is soft-thresholded
    at ``k_thresh`` times the current estimate and the noise is re-estimated
    from the residual, for at most ``max_iter`` passes.
    """
    bands = coeffs.bands if isinstance(coeffs, WaveletCoeffs) else np.asarray(coeffs)
    sigmas = np.zeros(bands.shape[0])
    for b, band in enumerate(bands):
        sigma = MAD_TO_SIGMA * mad(band)
        for _ in range(max_iter):
            if sigma == 0.0:
                break
            residual = band - soft_threshold(band, k_thresh * sigma)
            new = MAD_TO_SIGMA * mad(residual)
            done = abs(new - sigma) <= rtol * sigma
            sigma = new
            if done:
                break
        sigmas[b] = sigma
    return sigmas
