"""Matrix-free observation operator: Lanczos4 sub-pixel warp, decimation,
flux and inverse-noise scaling.

For exposure ``k`` the predicted LR sample is

    yhat_k[i, j] = sum_{l, m} h(l - d (i - s_i)) h(m - d (j - s_j)) x[l, m]

with ``(s_i, s_j)`` the exposure's centroid shift in LR pixels. The 2-D
kernel is separable, so ``D H_k`` factors as ``A_rows @ X @ A_cols.T`` with
two banded ``p x dp`` matrices holding at most eight taps per row.
"""
from __future__ import annotations

import logging
from collections import namedtuple
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve

from .exceptions import InputError
from .image import LRStack

logger = logging.getLogger(__name__)

__all__ = [
    "LANCZOS_ORDER",
    "lanczos4_1d",
    "warp_matrix",
    "predict_exposure",
    "ObservationOperator",
    "SpectralRadius",
    "spectral_radius",
]

LANCZOS_ORDER = 4


def lanczos4_1d(x):
    """Lanczos4 interpolant ``sinc(x) sinc(x/4)`` on ``|x| < 4``, else 0."""
    x = np.asarray(x, dtype=np.float64)
    out = np.sinc(x) * np.sinc(x / LANCZOS_ORDER)
    out = np.where(np.abs(x) < LANCZOS_ORDER, out, 0.0)
    return out if out.ndim else float(out)


def warp_matrix(n_lr: int, d: int, shift: float, n_hr: int | None = None) -> sp.csr_matrix:
    """Banded ``(n_lr, n_hr)`` matrix of 1-D warp-and-decimate taps.

    Row ``i`` holds ``h(l - d (i - shift))`` for the HR columns ``l`` in the
    kernel support; samples falling outside the HR raster are dropped (zero
    boundary).
    """
    n_hr = n_lr * d if n_hr is None else n_hr
    centers = d * (np.arange(n_lr) - shift)
    cols = np.floor(centers)[:, None].astype(np.int64) + np.arange(-3, 5)
    vals = lanczos4_1d(cols - centers[:, None])
    rows = np.broadcast_to(np.arange(n_lr)[:, None], cols.shape)
    keep = (cols >= 0) & (cols < n_hr) & (vals != 0.0)
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_lr, n_hr))


def _fft_taps(d: int, shift: float):
    offset = -d * shift
    base = int(np.floor(offset))
    frac = offset - base
    return base, lanczos4_1d(np.arange(-3, 5) - frac)


def _fft_predict(x, d, shift, lr_shape):
    (bi, ti), (bj, tj) = _fft_taps(d, shift[0]), _fft_taps(d, shift[1])
    full = fftconvolve(x, np.outer(ti, tj)[::-1, ::-1], mode="full")
    rows = d * np.arange(lr_shape[0]) + bi + 4
    cols = d * np.arange(lr_shape[1]) + bj + 4
    vr = (rows >= 0) & (rows < full.shape[0])
    vc = (cols >= 0) & (cols < full.shape[1])
    out = np.zeros(lr_shape)
    out[np.ix_(vr, vc)] = full[np.ix_(rows[vr], cols[vc])]
    return out


def _fft_adjoint(r, d, shift, hr_shape):
    (bi, ti), (bj, tj) = _fft_taps(d, shift[0]), _fft_taps(d, shift[1])
    grid = np.zeros((hr_shape[0] + 7, hr_shape[1] + 7))
    rows = d * np.arange(r.shape[0]) + bi + 4
    cols = d * np.arange(r.shape[1]) + bj + 4
    vr = (rows >= 0) & (rows < grid.shape[0])
    vc = (cols >= 0) & (cols < grid.shape[1])
    grid[np.ix_(rows[vr], cols[vc])] = r[np.ix_(vr, vc)]
    return fftconvolve(grid, np.outer(ti, tj), mode="valid")


def predict_exposure(x_hr, shift, d: int, method: str = "separable") -> np.ndarray:
    """Noise-free LR prediction ``D H_k x`` for one centroid shift."""
    x_hr = np.asarray(x_hr, dtype=np.float64)
    d = int(d)
    if x_hr.ndim != 2 or x_hr.shape[0] % d or x_hr.shape[1] % d:
        raise InputError(f"HR image of shape {x_hr.shape} is incompatible with d={d}")
    lr_shape = (x_hr.shape[0] // d, x_hr.shape[1] // d)
    if method == "fft":
        return _fft_predict(x_hr, d, shift, lr_shape)
    if method != "separable":
        raise InputError(f"unknown method {method!r}")
    a_r = warp_matrix(lr_shape[0], d, shift[0])
    a_c = warp_matrix(lr_shape[1], d, shift[1])
    return a_r @ (a_c @ x_hr.T).T


class ObservationOperator:
    """The stacked map ``M = Sigma^-1 F W`` from an HR image to ``n`` LR images.

    Parameters
    ----------
    shifts : sequence of (float, float)
        Centroid shifts in LR pixels, relative to the reference exposure.
    fluxes, sigmas : sequence of float
        Photometric factors ``f_k`` and noise levels ``sigma_k``.
    lr_shape : (int, int)
    d : int
        Upsampling factor.
    method : {"separable", "fft"}
        Banded separable products (default) or FFT convolution followed by
        sampling. Both give the same operator to rounding error.
    """

    def __init__(self, shifts, fluxes, sigmas, lr_shape, d, method="separable"):
        self.shifts = [(float(s[0]), float(s[1])) for s in shifts]
        self.fluxes = np.asarray(fluxes, dtype=np.float64)
        self.sigmas = np.asarray(sigmas, dtype=np.float64)
        if not len(self.shifts) == len(self.fluxes) == len(self.sigmas) >= 1:
            raise InputError("shifts, fluxes and sigmas must have the same non-zero length")
        if np.any(self.sigmas <= 0) or np.any(self.fluxes <= 0):
            raise InputError("sigmas and fluxes must be positive")
        if method not in ("separable", "fft"):
            raise InputError(f"unknown method {method!r}")
        self.d = int(d)
        self.lr_shape = (int(lr_shape[0]), int(lr_shape[1]))
        self.hr_shape = (self.lr_shape[0] * self.d, self.lr_shape[1] * self.d)
        self.method = method
        self.scales = self.fluxes / self.sigmas
        self._rows = [warp_matrix(self.lr_shape[0], self.d, s[0]) for s in self.shifts]
        self._cols = [warp_matrix(self.lr_shape[1], self.d, s[1]) for s in self.shifts]
        self._rows_t = [a.T.tocsr() for a in self._rows]
        self._cols_t = [a.T.tocsr() for a in self._cols]

    @classmethod
    def from_stack(cls, stack: LRStack, method="separable"):
        return cls(stack.shifts, stack.fluxes, stack.sigmas, stack.lr_shape,
                   stack.upsampling_factor, method)

    @property
    def n(self) -> int:
        return len(self.shifts)

    @property
    def data_shape(self):
        return (self.n,) + self.lr_shape

    def _check_hr(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.hr_shape:
            if x.size == self.hr_shape[0] * self.hr_shape[1]:
                return x.reshape(self.hr_shape)
            raise InputError(f"HR image shape {x.shape} does not match {self.hr_shape}")
        return x

    def _check_data(self, r):
        r = np.asarray(r, dtype=np.float64)
        if r.shape != self.data_shape:
            if r.size == self.n * self.lr_shape[0] * self.lr_shape[1]:
                return r.reshape(self.data_shape)
            raise InputError(f"data shape {r.shape} does not match {self.data_shape}")
        return r

    def forward(self, x) -> np.ndarray:
        """``M x`` as an ``(n, p1, p2)`` array; ``.ravel()`` gives the stacked vector."""
        x = self._check_hr(x)
        out = np.empty(self.data_shape)
        if self.method == "fft":
            for k, s in enumerate(self.shifts):
                out[k] = self.scales[k] * _fft_predict(x, self.d, s, self.lr_shape)
            return out
        xt = x.T
        for k in range(self.n):
            out[k] = self.scales[k] * (self._rows[k] @ (self._cols[k] @ xt).T)
        return out

    def adjoint(self, r) -> np.ndarray:
        """``M^T r``; exposures are accumulated in index order."""
        r = self._check_data(r)
        out = np.zeros(self.hr_shape)
        for k in range(self.n):
            if self.method == "fft":
                out += self.scales[k] * _fft_adjoint(r[k], self.d, self.shifts[k], self.hr_shape)
            else:
                out += self.scales[k] * (self._rows_t[k] @ (self._cols_t[k] @ r[k].T).T)
        return out

    def normal(self, x) -> np.ndarray:
        return self.adjoint(self.forward(x))

    def data_vector(self, stack_or_cube) -> np.ndarray:
        """Whitened data ``z_k = y_k / sigma_k``."""
        cube = stack_or_cube.cube if isinstance(stack_or_cube, LRStack) else stack_or_cube
        cube = self._check_data(cube)
        return cube / self.sigmas[:, None, None]

    def j1(self, x, z) -> float:
        res = self._check_data(z) - self.forward(x)
        return 0.5 * float(np.vdot(res, res))

    def grad_j1(self, x, z) -> np.ndarray:
        """Gradient ``M^T (M x - z)`` of ``J1(x) = 0.5 ||z - M x||^2``."""
        return self.adjoint(self.forward(x) - self._check_data(z))

    def dense(self) -> np.ndarray:
        """Explicit ``(n p^2, d^2 p^2)`` matrix; only for small test grids."""
        blocks = []
        for k in range(self.n):
            blocks.append(self.scales[k] * sp.kron(self._rows[k], self._cols[k]).toarray())
        return np.vstack(blocks)

    @cached_property
    def lipschitz(self) -> float:
        """Spectral radius of ``M^T M`` (Lipschitz constant of the gradient)."""
        return spectral_radius(self.normal, self.hr_shape).value


SpectralRadius = namedtuple("SpectralRadius", ["value", "iterations", "converged"])


def spectral_radius(apply, shape, tol=1e-6, max_iter=1000, seed=0) -> SpectralRadius:
    """Power-iteration estimate of the largest eigenvalue of a symmetric PSD map.

    Parameters
    ----------
    apply : callable
        Applies the operator to an array of ``shape``.
    shape : tuple
    tol : float
        Stop when the relative change of the estimate falls below ``tol``.
    max_iter : int

    Returns
    -------
    SpectralRadius
        ``(value, iterations, converged)``. When the cap is hit the best
        estimate is returned with ``converged=False``.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    rho = 0.0
    for it in range(1, max_iter + 1):
        y = apply(x)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return SpectralRadius(0.0, it, True)
        # Rayleigh quotient: error is quadratic in the eigenvector error
        new = float(np.vdot(x, y))
        if rho > 0 and abs(new - rho) <= tol * new:
            return SpectralRadius(new, it, True)
        rho = new
        x = y / norm
    logger.warning("power iteration did not converge in %d iterations", max_iter)
    return SpectralRadius(rho, max_iter, False)
