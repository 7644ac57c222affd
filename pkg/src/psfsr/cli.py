"""Command-line entry point: ``psfsr reconstruct | simulate | benchmark``.

Exit codes: 0 success, 2 bad input, 3 parameter estimation failure,
4 solver divergence, 5 benchmark with fewer than 90% successful cells.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from .exceptions import EstimationError, InputError, SolverDivergence

logger = logging.getLogger("psfsr")

EXIT_OK, EXIT_INPUT, EXIT_ESTIMATION, EXIT_SOLVER, EXIT_DEGRADED = 0, 2, 3, 4, 5
TRANSFORMS = {2: "starlet2", 24: "bior79"}
MIN_SUCCESS_RATE = 0.9


# ---------------------------------------------------------------- config file


def _coerce(value: str, annotation):
    """Convert a config string to the type named by a dataclass annotation."""
    text = str(annotation)
    v = value.strip()
    if "None" in text and v.lower() in ("none", ""):
        return None
    if "bool" in text:
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise InputError(f"expected a boolean, got {value!r}")
    try:
        if "int" in text and "float" not in text:
            return int(v)
        if "float" in text:
            return float(v)
    except ValueError as exc:
        raise InputError(f"cannot convert {value!r}: {exc}") from exc
    return v


def solver_config_from(items: dict, **overrides):
    """Build a :class:`SolverConfig` from ``key = value`` strings.

    Keys are ``SolverConfig`` field names; inner prox settings use a
    ``prox.`` prefix (``prox.inner_max_iters = 50``).
    """
    from .prox import ProxConfig
    from .solvers import SolverConfig

    hints = typing.get_type_hints(SolverConfig)
    prox_hints = typing.get_type_hints(ProxConfig)
    kw, prox_kw = {}, {}
    for key, value in items.items():
        if key.startswith("prox."):
            name = key[5:]
            if name not in prox_hints:
                raise InputError(f"unknown config key {key!r}")
            prox_kw[name] = _coerce(value, prox_hints[name])
        elif key in hints and key != "prox":
            kw[key] = _coerce(value, hints[key])
        else:
            raise InputError(f"unknown config key {key!r}")
    kw.update({k: v for k, v in overrides.items() if v is not None})
    cfg = SolverConfig(**kw)
    if prox_kw:
        cfg = dataclasses.replace(cfg, prox=dataclasses.replace(cfg.prox, **prox_kw))
    return cfg


def _load_config(path):
    from .io import read_keyvalue

    return read_keyvalue(path) if path else {}


# ---------------------------------------------------------------- reconstruct


def _output_image_path(output_file, output_dir):
    p = Path(output_file)
    return p if p.parent != Path(".") or p.is_absolute() else Path(output_dir) / p


def cmd_reconstruct(args) -> int:
    from .estimation import estimate_parameters
    from .image import LRStack
    from .io import read_cube, write_image, write_keyvalue
    from .solvers import sprite

    if args.transform not in TRANSFORMS:
        raise InputError(f"-t must be one of {sorted(TRANSFORMS)}, got {args.transform}")
    if not args.kappa > 0:
        raise InputError("-s (kappa) must be positive")
    if args.upsampling < 1:
        raise InputError("-r (upsampling) must be >= 1")
    if args.sigma is not None and not args.sigma > 0:
        raise InputError("--sigma must be positive")
    cfg = solver_config_from(_load_config(args.config), kappa=args.kappa,
                             dictionary_id=TRANSFORMS[args.transform], seed=args.seed)
    cube, overrides = read_cube(args.data_file)
    stack = LRStack.from_cube(cube, args.upsampling)

    try:
        report = estimate_parameters(stack, noise=args.estimate_noise, flux=args.estimate_flux,
                                     shifts=True, sigma=args.sigma if args.sigma else 1.0)
    except EstimationError as exc:
        raise EstimationError(f"parameter estimation: {exc}") from exc
    # header keywords win over both estimates and defaults
    sigmas = [h if h is not None else s for h, s in zip(overrides["sigmas"], report.sigmas)]
    fluxes = [h if h is not None else f for h, f in zip(overrides["fluxes"], report.relative_fluxes)]
    work = stack.with_parameters(sigmas, fluxes, report.shifts)
    result = sprite(work, cfg, estimate_noise=False, estimate_flux=False, estimate_shifts=False)

    out_dir = Path(args.output_dir)
    image_path = _output_image_path(args.output_file, out_dir)
    header = {"UPSAMP": args.upsampling, "KAPPA": args.kappa, "TRANSFRM": args.transform,
              "KMAX": cfg.k_max}
    write_image(image_path, result.image, header)
    items = {
        "data_file": str(args.data_file),
        "output_file": str(image_path),
        "dictionary": cfg.dictionary_id,
        "kappa": cfg.kappa,
        "upsampling": args.upsampling,
        "n_exposures": len(work),
        "sigmas": sigmas,
        "fluxes": fluxes,
        "shifts": [c for s in report.shifts for c in s],
        "rho": result.rho,
        "mu": result.mu,
        "runtime_s": result.runtime_s,
    }
    for k, hist in enumerate(result.histories):
        items[f"pass{k}_iterations"] = len(hist["rel_change"])
        items[f"pass{k}_objective"] = hist["objective"]
    write_keyvalue(out_dir / "report.txt", items)
    if not args.no_plot:
        from .plotting import plot_reconstruction

        plot_reconstruction(out_dir / "reconstruction.png", result.image, lr=cube[0])
    logger.info("wrote %s", image_path)
    return EXIT_OK


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    from .io import write_fits, write_keyvalue
    from .simulation import SimSpec, make_psf, random_psf_params, synthesize_stack

    spec = SimSpec(psf_kind=args.psf, lr_size=args.lr_size, n_exposures=args.n_exposures,
                   d=args.upsampling, snr_db=args.snr, seed=args.seed)
    rng_psf = np.random.default_rng(np.random.SeedSequence([args.seed, 0]))
    rng_obs = np.random.default_rng(np.random.SeedSequence([args.seed, 1]))
    params = random_psf_params(spec.psf_kind, rng_psf, spec.d)
    truth = make_psf(spec.psf_kind, params, spec.hr_dims)
    stack, info = synthesize_stack(truth, spec, rng=rng_obs)
    out = Path(args.output_dir)
    write_fits(out / "truth.fits", truth)
    write_fits(out / "cube.fits", stack.cube)
    side = {"psf_kind": spec.psf_kind, "seed": args.seed, "snr_db": spec.snr_db,
            "upsampling": spec.d, "lr_size": spec.lr_size, "n_exposures": spec.n_exposures,
            "sigma": info["sigma"], "signal_level": info["signal_level"],
            "fluxes": info["fluxes"], "shifts": [c for s in info["shifts"] for c in s]}
    for k, v in sorted(params.items()):
        side[f"psf.{k}"] = v
    write_keyvalue(out / "truth.txt", side)
    logger.info("wrote %s", out)
    return EXIT_OK


# ---------------------------------------------------------------- benchmark


def cmd_benchmark(args) -> int:
    from .benchmark import DETAIL_COLUMNS, BenchmarkConfig, aggregate, run_benchmark
    from .io import write_csv
    from .plotting import plot_benchmark

    if args.transform not in TRANSFORMS:
        raise InputError(f"-t must be one of {sorted(TRANSFORMS)}, got {args.transform}")
    solver = solver_config_from(_load_config(args.config), kappa=args.kappa,
                                dictionary_id=TRANSFORMS[args.transform], seed=args.seed)
    cfg = BenchmarkConfig(snrs=tuple(args.snrs), trials=args.trials, methods=tuple(args.methods),
                          seed=args.seed, lr_size=args.lr_size, d=args.upsampling,
                          n_exposures=args.n_exposures, solver=solver)

    def progress(done, total):
        logger.info("cell %d/%d", done, total)

    res = run_benchmark(cfg, jobs=args.jobs, progress=progress)
    out = Path(args.output_dir)
    agg = aggregate(res.rows, cfg.methods)
    write_csv(out / "benchmark.csv", res.rows, DETAIL_COLUMNS)
    if agg:
        write_csv(out / "aggregate.csv", agg, list(agg[0]))
    write_csv(out / "failures.csv", res.failures, ("snr_db", "method", "trial", "stage", "error"))
    if agg and not args.no_plot:
        plot_benchmark(agg, out)
    rate = res.success_rate
    logger.info("%d rows, %d failures, success rate %.1f%%", len(res.rows), len(res.failures),
                100 * rate)
    if rate < MIN_SUCCESS_RATE:
        print(f"psfsr: benchmark degraded: only {100 * rate:.1f}% of cells succeeded",
              file=sys.stderr)
        return EXIT_DEGRADED
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _snr(text):
    v = float(text)
    if np.isnan(v):
        raise argparse.ArgumentTypeError("SNR must be a number or inf")
    return v


def _common_solver(p):
    p.add_argument("-t", dest="transform", type=int, default=2,
                   help="dictionary: 2 = starlet2, 24 = undecimated bior 7/9 (default 2)")
    p.add_argument("-s", dest="kappa", type=float, default=4.0,
                   help="threshold multiple kappa (default 4)")
    p.add_argument("--config", help="key = value file with advanced solver parameters")


def build_parser():
    from .benchmark import METHODS
    from .simulation import PSF_KINDS

    parser = argparse.ArgumentParser(prog="psfsr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="super-resolve a PSF from a cube of exposures")
    _common_solver(p)
    p.add_argument("-r", dest="upsampling", type=int, default=2, help="upsampling factor d")
    p.add_argument("-F", dest="estimate_flux", action="store_true",
                   help="estimate relative fluxes (otherwise unit flux)")
    p.add_argument("-N", dest="estimate_noise", action="store_true",
                   help="estimate noise levels (otherwise --sigma for every exposure)")
    p.add_argument("--sigma", type=float, default=None, help="noise level without -N (default 1)")
    p.add_argument("--no-plot", action="store_true", help="skip the reconstruction figure")
    p.add_argument("data_file")
    p.add_argument("output_file")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("simulate", help="write a synthetic truth, exposure cube and sidecar")
    p.add_argument("--psf", choices=PSF_KINDS, default=PSF_KINDS[0])
    p.add_argument("--lr-size", type=int, default=84)
    p.add_argument("--n-exposures", type=int, default=4)
    p.add_argument("-r", dest="upsampling", type=int, default=2)
    p.add_argument("--snr", type=_snr, default=30.0, help="SNR in dB, 'inf' for no noise")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="Monte-Carlo comparison of methods versus SNR")
    _common_solver(p)
    p.add_argument("--snrs", type=_snr, nargs="+", default=[10.0, 15.0, 20.0, 25.0, 30.0])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--methods", nargs="+", choices=METHODS,
                   default=["shift-and-add", "quadratic-baseline", "sprite-starlet2", "sprite-K1"])
    p.add_argument("--lr-size", type=int, default=84)
    p.add_argument("--n-exposures", type=int, default=4)
    p.add_argument("-r", dest="upsampling", type=int, default=2)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-plot", action="store_true", help="skip the figures")
    p.add_argument("output_dir")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(EXIT_INPUT, "input error", exc)
    except EstimationError as exc:
        return _fail(EXIT_ESTIMATION, "estimation failed", exc)
    except SolverDivergence as exc:
        return _fail(EXIT_SOLVER, "solver diverged", exc)


def _fail(code, kind, exc):
    print(f"psfsr: {kind}: {exc}", file=sys.stderr)
    return code

if __name__ == "__main__":
    sys.exit(main())
