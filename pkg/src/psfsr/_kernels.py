"""Dilated 1-D filtering with mirror boundaries, and its exact transpose.

The mirror rule reflects about the edge samples (``d c b | a b c d | c b a``),
i.e. indices are folded with period ``2n - 2``. Each filter is applied along
one axis of a 2-D array; zero taps of the a-trous dilation are skipped.
"""
from functools import lru_cache

import numba
import numpy as np


@lru_cache(maxsize=256)
def mirror_index(n: int, ntaps: int, center: int, step: int) -> np.ndarray:
    """``(ntaps, n)`` table of source indices for output positions ``0..n-1``."""
    if n == 1:
        return np.zeros((ntaps, 1), dtype=np.int64)
    period = 2 * n - 2
    pos = np.arange(n)[None, :] + (np.arange(ntaps)[:, None] - center) * step
    pos = np.mod(pos, period)
    pos = np.where(pos >= n, period - pos, pos)
    idx = np.ascontiguousarray(pos, dtype=np.int64)
    idx.flags.writeable = False
    return idx


@numba.njit(cache=True)
def _direct_range(n, offset):
    lo = min(max(0, -offset), n)
    hi = max(min(n, n - offset), lo)
    return lo, hi


@numba.njit(cache=True)
def _pass0(x, taps, idx, step, transpose, out):
    n = x.shape[0]
    c = taps.shape[0] // 2
    out[:, :] = 0.0
    for k in range(taps.shape[0]):
        w = taps[k]
        if w == 0.0:
            continue
        o = (k - c) * step
        lo, hi = _direct_range(n, o)
        for i in range(n):
            s = i + o if lo <= i < hi else idx[k, i]
            if transpose:
                dst = out[s]
                src = x[i]
            else:
                dst = out[i]
                src = x[s]
            for j in range(dst.shape[0]):
                dst[j] += w * src[j]
    return out


@numba.njit(cache=True)
def _pass1(x, taps, idx, step, transpose, out):
    n = x.shape[1]
    c = taps.shape[0] // 2
    out[:, :] = 0.0
    for i in range(x.shape[0]):
        src = x[i]
        dst = out[i]
        for k in range(taps.shape[0]):
            w = taps[k]
            if w == 0.0:
                continue
            o = (k - c) * step
            lo, hi = _direct_range(n, o)
            # interior samples need no folding; contiguous slices let the loop vectorize
            if transpose:
                a = src[lo:hi]
                b = dst[lo + o:hi + o]
                for j in range(hi - lo):
                    b[j] += w * a[j]
                for j in range(lo):
                    dst[idx[k, j]] += w * src[j]
                for j in range(hi, n):
                    dst[idx[k, j]] += w * src[j]
            else:
                a = src[lo + o:hi + o]
                b = dst[lo:hi]
                for j in range(hi - lo):
                    b[j] += w * a[j]
                for j in range(lo):
                    dst[j] += w * src[idx[k, j]]
                for j in range(hi, n):
                    dst[j] += w * src[idx[k, j]]
    return out


@numba.njit(cache=True)
def _sep2d(x, taps_r, idx_r, taps_c, idx_c, step, transpose):
    tmp = np.empty_like(x)
    out = np.empty_like(x)
    _pass0(x, taps_r, idx_r, step, transpose, tmp)
    return _pass1(tmp, taps_c, idx_c, step, transpose, out)


def filter_axis(x, taps, step, axis, transpose=False):
    """Apply the mirror-boundary filter ``taps`` dilated by ``step`` along ``axis``.

    ``taps`` is centered on its middle element. With ``transpose=True`` the
    exact matrix transpose of the same operator is applied.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    taps = np.ascontiguousarray(taps, dtype=np.float64)
    step = int(step)
    idx = mirror_index(x.shape[axis], taps.size, taps.size // 2, step)
    kernel = _pass0 if axis == 0 else _pass1
    return kernel(x, taps, idx, step, transpose, np.empty_like(x))


def filter2d(x, taps_rows, taps_cols, step, transpose=False):
    """Separable 2-D filtering along both axes (the two passes commute)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    taps_rows = np.ascontiguousarray(taps_rows, dtype=np.float64)
    taps_cols = np.ascontiguousarray(taps_cols, dtype=np.float64)
    step = int(step)
    idx_r = mirror_index(x.shape[0], taps_rows.size, taps_rows.size // 2, step)
    idx_c = mirror_index(x.shape[1], taps_cols.size, taps_cols.size // 2, step)
    return _sep2d(x, taps_rows, idx_r, taps_cols, idx_c, step, transpose)
