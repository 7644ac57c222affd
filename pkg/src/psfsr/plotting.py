"""Figures for benchmark tables and single reconstructions (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_path  # noqa: E402

__all__ = ["plot_benchmark", "plot_reconstruction"]

# (column stem, axis label, log scale)
PANELS = (
    ("e1_err", "mean |e1 error|", True),
    ("e2_err", "mean |e2 error|", True),
    ("fwhm_err_pct", "FWHM error (%)", False),
    ("errmap_std", "error map std", True),
    ("pearson", "Pearson correlation", False),
)


def _save(fig, path, dpi=120):
    path = Path(path)
    with atomic_path(path) as tmp:
        fig.savefig(tmp, dpi=dpi, format=path.suffix.lstrip(".") or "png")
    plt.close(fig)
    return path


def plot_benchmark(aggregate_rows, outdir, prefix="benchmark", fmt="png"):
    """One figure per metric: mean with std error bars versus SNR, one line per method.

    Returns the list of written paths.
    """
    outdir = Path(outdir)
    methods = list(dict.fromkeys(r["method"] for r in aggregate_rows))
    written = []
    for stem, label, logy in PANELS:
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for m in methods:
            sel = sorted((r for r in aggregate_rows if r["method"] == m), key=lambda r: r["snr_db"])
            snr = np.array([r["snr_db"] for r in sel], dtype=float)
            mean = np.array([r[f"{stem}_mean"] for r in sel])
            std = np.array([r[f"{stem}_std"] for r in sel])
            ax.errorbar(snr, mean, yerr=std, marker="o", ms=3, capsize=2, lw=1, label=m)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        written.append(_save(fig, outdir / f"{prefix}_{stem}.{fmt}"))
    return written


def plot_reconstruction(path, recon, lr=None, truth=None):
    """Side-by-side panels: an LR exposure, the reconstruction and, with a truth, |error|."""
    panels = []
    if lr is not None:
        panels.append(("LR exposure", lr))
    panels.append(("reconstruction", recon))
    if truth is not None:
        panels.append(("truth", truth))
        panels.append(("|truth - recon|", np.abs(np.asarray(truth) - np.asarray(recon))))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 3.2), squeeze=False)
    for ax, (title, img) in zip(axes[0], panels):
        im = ax.imshow(np.asarray(img), origin="lower", cmap="viridis")
        ax.set_title(title, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    return _save(fig, path)
