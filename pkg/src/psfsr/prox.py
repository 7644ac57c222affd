"""Proximity operators: positivity projection and the weighted analysis-l1 prox."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

__all__ = ["ProxConfig", "project_positive_shift", "analysis_prox", "analysis_l1"]


@dataclass(frozen=True)
class ProxConfig:
    """Inner forward-backward settings for :func:`analysis_prox`.

    ``mu_prox=None`` means ``1 / rho(Phi Phi^T)`` of the dictionary in use.
    """

    mu_prox: float | None = None
    inner_max_iters: int = 50
    inner_rel_tol: float = 1e-6
    warm_start: bool = False

    def __post_init__(self):
        if self.mu_prox is not None and not self.mu_prox > 0:
            raise InputError("mu_prox must be positive")
        if self.inner_max_iters < 1:
            raise InputError("inner_max_iters must be >= 1")


def project_positive_shift(x, x0):
    """Projection onto ``{t : t >= -x0}``, i.e. ``max(x_i, -x0_i)``."""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    if x.shape != x0.shape:
        raise InputError(f"shape mismatch: {x.shape} vs {x0.shape}")
    return np.maximum(x, -x0)


def analysis_l1(x, thresholds, dictionary) -> float:
    """``sum_j t_j |(Phi x)_j|``, the penalty whose prox is :func:`analysis_prox`."""
    return float(np.sum(np.abs(thresholds * dictionary.analyze(x))))


def analysis_prox(x, thresholds, dictionary, cfg: ProxConfig | None = None, u0=None,
                  return_dual=False):
    """Prox of ``g(v) = sum_j t_j |(Phi v)_j|`` at ``x``.

    The dual problem ``min_{|u_j| <= t_j} 0.5 ||x - Phi^T u||^2`` is solved by
    projected gradient iterations started from ``u0`` (zero by default)::

        u~ = u + mu_prox Phi (x - Phi^T u)
        u  = clip(u~, -t, t)

    and the prox is ``x - Phi^T u``. Iterations stop when the relative change
    of ``u`` drops below ``cfg.inner_rel_tol`` or after
    ``cfg.inner_max_iters`` passes.

    Parameters
    ----------
    x : ndarray
        Image at which the prox is evaluated.
    thresholds : ndarray
        Non-negative bound per coefficient, broadcastable to
        ``dictionary.coeff_shape``.
    dictionary : Dictionary
    cfg : ProxConfig, optional
    u0 : ndarray, optional
        Starting dual point (for warm starts).
    return_dual : bool
        Also return the final dual variable and the iteration count.
    """
    cfg = cfg or ProxConfig()
    x = np.asarray(x, dtype=np.float64)
    t = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), dictionary.coeff_shape)
    if np.any(t < 0):
        raise InputError("thresholds must be non-negative")
    mu = cfg.mu_prox if cfg.mu_prox is not None else 1.0 / dictionary.frame_bound
    u = np.zeros(dictionary.coeff_shape) if u0 is None else np.clip(u0, -t, t)
    n_iter = 0
    if np.any(t > 0):
        for n_iter in range(1, cfg.inner_max_iters + 1):
            u_new = np.clip(u + mu * dictionary.analyze(x - dictionary.adjoint(u)), -t, t)
            change = np.linalg.norm(u_new - u)
            scale = np.linalg.norm(u_new)
            u = u_new
            if change <= cfg.inner_rel_tol * scale or scale == 0.0:
                break
    else:
        u = np.zeros(dictionary.coeff_shape)
    out = x - dictionary.adjoint(u)
    if return_dual:
        return out, u, n_iter
    return out
