"""Raster types and the elementary sampling operators.

Images are plain 2-D float arrays indexed ``[i, j]`` (row, column) and
flattened in row-major order. :class:`ImageGrid` adds the pixel-pitch
metadata where it matters (I/O, stacks); every operator here accepts
anything ``np.asarray`` understands.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exceptions import InputError

__all__ = [
    "ImageGrid",
    "LRExposure",
    "LRStack",
    "flatten",
    "unflatten",
    "decimate",
    "zero_pad_upsample",
    "integer_shift",
]


def _as_image(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise InputError(f"expected a 2-D image, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ImageGrid:
    """2-D raster with its pitch relative to the high-resolution grid.

    ``pitch_scale`` is 1 for an HR image and ``d`` for an LR image
    downsampled by ``d``.
    """

    pixels: np.ndarray
    pitch_scale: Fraction = Fraction(1)

    def __post_init__(self):
        arr = _as_image(self.pixels)
        if arr.size == 0:
            raise InputError("image must have at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise InputError("image contains NaN or Inf")
        if self.pitch_scale <= 0:
            raise InputError("pitch_scale must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "pitch_scale", Fraction(self.pitch_scale))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.pixels
        return self.pixels.astype(dtype)


@dataclass(frozen=True)
class LRExposure:
    """One undersampled observation with its data-fidelity parameters.

    ``shift`` is the centroid offset (rows, columns) in LR pixels relative to
    the reference exposure.
    """

    image: np.ndarray
    sigma: float = 1.0
    flux: float = 1.0
    shift: tuple = (0.0, 0.0)

    def __post_init__(self):
        arr = np.array(_as_image(self.image))
        if not np.all(np.isfinite(arr)):
            raise InputError("exposure contains NaN or Inf")
        if not self.sigma > 0:
            raise InputError(f"sigma must be positive, got {self.sigma}")
        if not self.flux > 0:
            raise InputError(f"flux must be positive, got {self.flux}")
        shift = (float(self.shift[0]), float(self.shift[1]))
        if abs(shift[0]) >= arr.shape[0] or abs(shift[1]) >= arr.shape[1]:
            raise InputError(f"shift {shift} falls outside the raster")
        arr.flags.writeable = False
        object.__setattr__(self, "image", arr)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "flux", float(self.flux))
        object.__setattr__(self, "shift", shift)


@dataclass(frozen=True)
class LRStack:
    """Ordered set of same-sized exposures and the target upsampling factor."""

    exposures: tuple
    upsampling_factor: int = 2
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        exposures = tuple(self.exposures)
        if not exposures:
            raise InputError("a stack needs at least one exposure")
        shape = exposures[0].image.shape
        for k, e in enumerate(exposures):
            if e.image.shape != shape:
                raise InputError(f"exposure {k} has shape {e.image.shape}, expected {shape}")
        if int(self.upsampling_factor) < 1:
            raise InputError("upsampling factor must be >= 1")
        object.__setattr__(self, "exposures", exposures)
        object.__setattr__(self, "upsampling_factor", int(self.upsampling_factor))

    @classmethod
    def from_cube(cls, cube, d=2, sigmas=None, fluxes=None, shifts=None, meta=None):
        cube = np.asarray(cube, dtype=np.float64)
        if cube.ndim == 2:
            cube = cube[None]
        if cube.ndim != 3:
            raise InputError(f"expected an (n, p, p) cube, got shape {cube.shape}")
        n = cube.shape[0]
        sigmas = [1.0] * n if sigmas is None else list(sigmas)
        fluxes = [1.0] * n if fluxes is None else list(fluxes)
        shifts = [(0.0, 0.0)] * n if shifts is None else [tuple(s) for s in shifts]
        if not len(sigmas) == len(fluxes) == len(shifts) == n:
            raise InputError("per-exposure parameter lists must match the cube length")
        exps = tuple(LRExposure(cube[k], sigmas[k], fluxes[k], shifts[k]) for k in range(n))
        return cls(exps, d, dict(meta or {}))

    def with_parameters(self, sigmas=None, fluxes=None, shifts=None) -> "LRStack":
        """Copy of the stack with some per-exposure parameters replaced."""
        n = len(self)
        sigmas = self.sigmas if sigmas is None else sigmas
        fluxes = self.fluxes if fluxes is None else fluxes
        shifts = self.shifts if shifts is None else shifts
        exps = tuple(
            LRExposure(self.exposures[k].image, sigmas[k], fluxes[k], shifts[k]) for k in range(n)
        )
        return LRStack(exps, self.upsampling_factor, dict(self.meta))

    def __len__(self):
        return len(self.exposures)

    @property
    def lr_shape(self):
        return self.exposures[0].image.shape

    @property
    def hr_shape(self):
        d = self.upsampling_factor
        return (self.lr_shape[0] * d, self.lr_shape[1] * d)

    @property
    def cube(self) -> np.ndarray:
        return np.stack([e.image for e in self.exposures])

    @property
    def sigmas(self):
        return [e.sigma for e in self.exposures]

    @property
    def fluxes(self):
        return [e.flux for e in self.exposures]

    @property
    def shifts(self):
        return [e.shift for e in self.exposures]


def flatten(image) -> np.ndarray:
    """Row-major ("lines after lines") vector of the pixels."""
    return _as_image(image).reshape(-1).copy()


def unflatten(vector, shape: Sequence[int]) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    if vector.size != shape[0] * shape[1]:
        raise InputError(f"cannot reshape {vector.size} values to {tuple(shape)}")
    return vector.reshape(shape).copy()


def decimate(hr, d: int) -> np.ndarray:
    """Keep every ``d``-th sample starting at (0, 0): the operator D."""
    hr = _as_image(hr)
    d = int(d)
    if d < 1:
        raise InputError("decimation factor must be >= 1")
    if hr.shape[0] % d or hr.shape[1] % d:
        raise InputError(f"shape {hr.shape} is not divisible by {d}")
    return hr[::d, ::d].copy()


def zero_pad_upsample(lr, d: int) -> np.ndarray:
    """Place LR samples at (d*i, d*j) of a zero HR grid: the operator D^T."""
    lr = _as_image(lr)
    d = int(d)
    if d < 1:
        raise InputError("upsampling factor must be >= 1")
    out = np.zeros((lr.shape[0] * d, lr.shape[1] * d))
    out[::d, ::d] = lr
    return out


def integer_shift(image, di: int, dj: int) -> np.ndarray:
    """``out[i, j] = image[i - di, j - dj]``, zero where undefined."""
    image = _as_image(image)
    di, dj = int(di), int(dj)
    h, w = image.shape
    out = np.zeros_like(image)
    if abs(di) >= h or abs(dj) >= w:
        return out
    src_i = slice(max(0, -di), h - max(0, di))
    dst_i = slice(max(0, di), h - max(0, -di))
    src_j = slice(max(0, -dj), w - max(0, dj))
    dst_j = slice(max(0, dj), w - max(0, -dj))
    out[dst_i, dst_j] = image[src_i, src_j]
    return out
