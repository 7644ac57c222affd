"""File input and output: FITS cubes, a raw float64 fallback, key-value text files.

Every writer goes through a temporary file in the destination directory
followed by :func:`os.replace`, so readers never see a partial file.

Raw format
----------
Eight little-endian int64 header words ``(version=1, ndim, n0, n1, n2, 0, 0, 0)``
followed by the little-endian float64 samples in C order. ``ndim`` is 2 or 3;
for 2-D data ``n2`` is 0.
"""
from __future__ import annotations

import contextlib
import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import InputError

__all__ = [
    "RAW_SUFFIXES",
    "atomic_path",
    "read_cube",
    "write_fits",
    "read_raw",
    "write_raw",
    "write_image",
    "write_keyvalue",
    "read_keyvalue",
    "write_csv",
]

RAW_SUFFIXES = (".raw", ".bin")
RAW_VERSION = 1
_HEADER = np.dtype("<i8")
_DATA = np.dtype("<f8")


@contextlib.contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; move it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def _is_raw(path):
    return Path(path).suffix.lower() in RAW_SUFFIXES


def read_raw(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 8 * _HEADER.itemsize:
        raise InputError(f"{path}: file too short for a raw header")
    head = np.frombuffer(blob[:64], dtype=_HEADER)
    version, ndim = int(head[0]), int(head[1])
    if version != RAW_VERSION:
        raise InputError(f"{path}: unsupported raw version {version}")
    if ndim not in (2, 3):
        raise InputError(f"{path}: raw data must be 2-D or 3-D, header says {ndim}")
    shape = tuple(int(v) for v in head[2:2 + ndim])
    if any(s < 1 for s in shape):
        raise InputError(f"{path}: invalid raw shape {shape}")
    expected = 64 + int(np.prod(shape)) * _DATA.itemsize
    if len(blob) != expected:
        raise InputError(f"{path}: expected {expected} bytes for shape {shape}, found {len(blob)}")
    return np.frombuffer(blob[64:], dtype=_DATA).reshape(shape).astype(np.float64)


def write_raw(path, data):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim not in (2, 3):
        raise InputError("raw data must be 2-D or 3-D")
    head = np.zeros(8, dtype=_HEADER)
    head[0], head[1] = RAW_VERSION, data.ndim
    head[2:2 + data.ndim] = data.shape
    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(head.tobytes())
            fh.write(np.ascontiguousarray(data, dtype=_DATA).tobytes())


def read_cube(path):
    """Read an ``(n, p, p)`` cube and its per-exposure header overrides.

    Returns
    -------
    cube : ndarray
        Always 3-D; a 2-D image is returned as a one-exposure cube.
    overrides : dict
        ``{"sigmas": [...], "fluxes": [...]}`` with ``None`` for exposures
        whose ``SIGMA_k``/``FLUX_k`` keyword is absent (FITS only).
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    header = {}
    if _is_raw(path):
        data = read_raw(path)
    else:
        from astropy.io import fits

        try:
            with fits.open(path, memmap=False) as hdul:
                data = hdul[0].data
                header = dict(hdul[0].header)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot parse FITS file {path}: {exc}") from exc
        if data is None:
            raise InputError(f"{path}: primary HDU holds no data")
        data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise InputError(f"{path}: expected a 2-D image or 3-D cube, got {data.ndim}-D")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: data contain NaN or infinite values")
    n = data.shape[0]

    def keyword(prefix, k):
        v = header.get(f"{prefix}_{k}")
        return None if v is None else float(v)

    overrides = {"sigmas": [keyword("SIGMA", k) for k in range(n)],
                 "fluxes": [keyword("FLUX", k) for k in range(n)]}
    return data, overrides


def write_fits(path, data, header=None):
    from astropy.io import fits

    hdu = fits.PrimaryHDU(np.asarray(data, dtype=np.float64))
    for key, value in (header or {}).items():
        hdu.header[key] = value
    with atomic_path(path) as tmp:
        hdu.writeto(tmp, overwrite=True)


def write_image(path, data, header=None):
    """FITS unless the suffix selects the raw format."""
    if _is_raw(path):
        write_raw(path, data)
    else:
        write_fits(path, data, header)


def _format(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_format(v) for v in np.ravel(np.asarray(value, dtype=object)))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_keyvalue(path, items):
    """``key = value`` per line; sequences are space separated."""
    lines = [f"{k} = {_format(v)}\n" for k, v in items.items()]
    with atomic_path(path) as tmp:
        Path(tmp).write_text("".join(lines))


def read_keyvalue(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment. Values stay strings."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def write_csv(path, rows, columns):
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore",
                               lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _format(v) if isinstance(v, float) else v for k, v in r.items()})
