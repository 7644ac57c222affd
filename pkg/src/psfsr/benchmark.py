"""Monte-Carlo comparison of reconstruction methods on simulated stacks."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import estimate_parameters
from .exceptions import InputError
from .metrics import (DEFAULT_WEIGHT_SIGMA, ellipticity, error_map_stats, fwhm_lorentzian,
                      pearson_correlation, weighted_moments)
from .simulation import SimSpec, make_psf, random_psf_params, synthesize_stack
from .solvers import SolverConfig, quadratic_baseline, shift_and_add, sprite

logger = logging.getLogger(__name__)

__all__ = [
    "METHODS",
    "DETAIL_COLUMNS",
    "BenchmarkConfig",
    "BenchmarkResult",
    "trial_truth",
    "run_cell",
    "run_benchmark",
    "aggregate",
]

METHODS = ("shift-and-add", "quadratic-baseline", "sprite-starlet2", "sprite-bior79",
           "sprite-no-positivity", "sprite-K1")
DETAIL_COLUMNS = ("snr_db", "method", "trial", "e1_err", "e2_err", "fwhm_err_pct",
                  "errmap_std", "pearson", "runtime_s")
METRIC_COLUMNS = DETAIL_COLUMNS[3:]


@dataclass(frozen=True)
class BenchmarkConfig:
    """Grid and shared settings of a benchmark run.

    Trials alternate over ``psf_kinds``. Every method in a cell sees the
    same stack and the same estimated noise levels, fluxes and shifts.
    """

    snrs: tuple = (10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 20
    methods: tuple = ("shift-and-add", "quadratic-baseline", "sprite-starlet2", "sprite-K1")
    seed: int = 0
    lr_size: int = 84
    d: int = 2
    n_exposures: int = 4
    psf_kinds: tuple = ("elliptical-gaussian", "obscured-airy")
    weight_sigma: float = DEFAULT_WEIGHT_SIGMA
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InputError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        if not self.methods:
            raise InputError("need at least one method")
        if self.trials < 1:
            raise InputError("trials must be >= 1")
        if not self.snrs:
            raise InputError("need at least one SNR")
        object.__setattr__(self, "snrs", tuple(float(s) for s in self.snrs))
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass
class BenchmarkResult:
    rows: list
    failures: list
    config: BenchmarkConfig
    images: dict = field(default_factory=dict)

    @property
    def n_cells(self):
        return len(self.rows) + len(self.failures)

    @property
    def success_rate(self):
        return len(self.rows) / self.n_cells if self.n_cells else 1.0

    def column(self, method, name, snr=None):
        return np.array([r[name] for r in self.rows
                         if r["method"] == method and (snr is None or r["snr_db"] == snr)])


def _snr_key(snr):
    return 10 ** 6 if snr == np.inf else int(round(snr * 1000)) % 10 ** 6


def trial_truth(cfg: BenchmarkConfig, trial: int):
    """HR truth PSF of a trial; shared by every SNR of that trial."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial, 0]))
    kind = cfg.psf_kinds[trial % len(cfg.psf_kinds)]
    dims = (cfg.d * cfg.lr_size,) * 2
    return kind, make_psf(kind, random_psf_params(kind, rng, cfg.d), dims)


def _quality(truth, recon, t_shape, weight_sigma):
    e1, e2 = ellipticity(weighted_moments(recon, weight_sigma))
    fw = fwhm_lorentzian(recon)
    _, std = error_map_stats(truth, recon)
    return {
        "e1_err": abs(e1 - t_shape[0]),
        "e2_err": abs(e2 - t_shape[1]),
        "fwhm_err_pct": 100.0 * abs(fw - t_shape[2]) / t_shape[2],
        "errmap_std": std,
        "pearson": pearson_correlation(truth, recon),
    }


def run_cell(cfg: BenchmarkConfig, snr: float, trial: int, keep_images=False):
    """Run every method on one (SNR, trial) cell.

    Returns
    -------
    rows, failures, images
        ``failures`` entries carry the method, stage and message of every
        method that raised; other methods in the cell still run.
    """
    kind, truth = trial_truth(cfg, trial)
    spec = SimSpec(psf_kind=kind, lr_size=cfg.lr_size, n_exposures=cfg.n_exposures, d=cfg.d,
                   snr_db=snr, seed=cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, trial, 1, _snr_key(snr)]))
    stack, _ = synthesize_stack(truth, spec, rng=rng)
    e1, e2 = ellipticity(weighted_moments(truth, cfg.weight_sigma))
    t_shape = (e1, e2, fwhm_lorentzian(truth))
    rows, failures, images = [], [], {}

    def fail(method, stage, exc):
        failures.append({"snr_db": snr, "method": method, "trial": trial, "stage": stage,
                         "error": f"{type(exc).__name__}: {exc}"})
        logger.warning("snr=%g trial=%d %s failed at %s: %s", snr, trial, method, stage, exc)

    t0 = time.perf_counter()
    try:
        report = estimate_parameters(stack, noise=bool(np.isfinite(snr)))
    except Exception as exc:  # noqa: BLE001 - recorded, not fatal
        for m in cfg.methods:
            fail(m, "estimation", exc)
        return rows, failures, images
    t_est = time.perf_counter() - t0
    work = stack.with_parameters(report.sigmas, report.relative_fluxes, report.shifts)

    outputs = {}
    sp = cfg.solver
    jobs = []
    if "sprite-starlet2" in cfg.methods or "sprite-K1" in cfg.methods:
        jobs.append(("sprite-starlet2", replace(sp, dictionary_id="starlet2")))
    if "sprite-bior79" in cfg.methods:
        jobs.append(("sprite-bior79", replace(sp, dictionary_id="bior79")))
    if "sprite-no-positivity" in cfg.methods:
        jobs.append(("sprite-no-positivity", replace(sp, dictionary_id="starlet2", positivity=False)))
    for name, scfg in jobs:
        if name == "sprite-starlet2" and "sprite-K1" in cfg.methods:
            scfg = replace(scfg, k_max=max(2, scfg.k_max))
        try:
            res = sprite(work, scfg, estimate_noise=False, estimate_flux=False, estimate_shifts=False)
        except Exception as exc:  # noqa: BLE001
            fail(name, "solver", exc)
            if name == "sprite-starlet2" and "sprite-K1" in cfg.methods:
                fail("sprite-K1", "solver", exc)
            continue
        outputs[name] = (res.image, res.runtime_s + t_est)
        if name == "sprite-starlet2" and "sprite-K1" in cfg.methods:
            outputs["sprite-K1"] = (res.passes[0], res.pass_times[0] + t_est)
            if sp.k_max == 1:
                outputs[name] = outputs["sprite-K1"]
    for name, fn in (("shift-and-add", shift_and_add), ("quadratic-baseline", quadratic_baseline)):
        if name not in cfg.methods:
            continue
        t1 = time.perf_counter()
        try:
            img = fn(work)
        except Exception as exc:  # noqa: BLE001
            fail(name, "solver", exc)
            continue
        outputs[name] = (img, time.perf_counter() - t1 + t_est)

    for name in cfg.methods:
        if name not in outputs:
            continue
        img, runtime = outputs[name]
        try:
            q = _quality(truth, img, t_shape, cfg.weight_sigma)
        except Exception as exc:  # noqa: BLE001
            fail(name, "metrics", exc)
            continue
        rows.append({"snr_db": snr, "method": name, "trial": trial, **q, "runtime_s": runtime})
        if keep_images:
            images[(snr, trial, name)] = img
    if keep_images:
        images[(snr, trial, "truth")] = truth
    return rows, failures, images


def _cell(args):
    return run_cell(*args)


def run_benchmark(cfg: BenchmarkConfig | None = None, jobs: int = 1, keep_images=False,
                  progress=None) -> BenchmarkResult:
    """Run all (SNR, trial) cells, optionally in ``jobs`` worker processes.

    Cells are seeded from ``(seed, trial, snr)`` only, so the output does
    not depend on ``jobs`` or on scheduling order.
    """
    cfg = cfg or BenchmarkConfig()
    cells = [(cfg, snr, trial, keep_images) for snr in cfg.snrs for trial in range(cfg.trials)]
    rows, failures, images = [], [], {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = []
        for c in cells:
            results.append(_cell(c))
            if progress is not None:
                progress(len(results), len(cells))
    for r, f, im in results:
        rows.extend(r)
        failures.extend(f)
        images.update(im)
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (r["snr_db"], order[r["method"]], r["trial"]))
    return BenchmarkResult(rows, failures, cfg, images)


def aggregate(rows, methods=None):
    """One row per (SNR, method): count plus mean, std and median of every metric."""
    keys = []
    for r in rows:
        k = (r["snr_db"], r["method"])
        if k not in keys:
            keys.append(k)
    if methods is not None:
        order = {m: i for i, m in enumerate(methods)}
        keys.sort(key=lambda k: (k[0], order.get(k[1], len(order))))
    out = []
    for snr, method in keys:
        sel = [r for r in rows if r["snr_db"] == snr and r["method"] == method]
        row = {"snr_db": snr, "method": method, "count": len(sel)}
        for c in METRIC_COLUMNS:
            v = np.array([r[c] for r in sel], dtype=np.float64)
            row[f"{c}_mean"] = float(v.mean())
            row[f"{c}_std"] = float(v.std())
            row[f"{c}_median"] = float(np.median(v))
        out.append(row)
    return out
