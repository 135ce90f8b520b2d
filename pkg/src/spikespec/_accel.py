"""Hot scalar-loop kernels with optional numba acceleration.

The per-bin random-walk filter and smoother iterate a Newton solve over
every time bin and dominate the runtime of the sequential-smoothing
baseline, so they are compiled with numba when available.  Setting the
environment variable ``SPIKESPEC_NO_NUMBA`` to a truthy value (or running
without numba installed) selects the pure-Python/numpy fallback, which
executes the identical code path uncompiled.

``rw_em_python`` always refers to the uncompiled implementation so the two
paths can be compared directly (see ``benchmarks/``).
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["USING_NUMBA", "rw_em", "rw_em_python"]

_DISABLED = os.environ.get("SPIKESPEC_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by environment flag")
    from numba import njit

    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False
    njit = None


def _rw_em_core(counts, n_trials, noise_var_init, init_mean, init_var,
                max_em_iter, var_tol, newton_tol, newton_max_iter):
    """EM for a scalar random-walk state observed through binomial counts.

    State: ``x_k = x_{k-1} + eps_k`` with ``eps ~ N(0, noise_var)``;
    observations are ``counts[k] ~ Binomial(n_trials, sigmoid(x_k))``.  The
    per-bin posterior mode is found by damped Newton iteration, the backward
    pass is a fixed-interval smoother, and the noise variance is re-estimated
    from smoothed second moments (lag-one covariance included) until its
    relative change falls below ``var_tol``.

    Returns ``(smoothed, smoothed_var, noise_var, n_iter, converged)`` where
    the smoothed arrays cover the observed bins only; index 0 of the internal
    recursions holds the fixed-prior initial state.
    """
    n_bins = counts.shape[0]
    n = n_bins + 1
    pred_mean = np.empty(n)
    pred_var = np.empty(n)
    filt_mean = np.empty(n)
    filt_var = np.empty(n)
    smooth_mean = np.empty(n)
    smooth_var = np.empty(n)
    gain = np.empty(n)

    noise_var = noise_var_init
    converged = False
    iteration = 0
    for iteration in range(1, max_em_iter + 1):
        filt_mean[0] = init_mean
        filt_var[0] = init_var
        pred_mean[0] = init_mean
        pred_var[0] = init_var
        for k in range(1, n):
            pm = filt_mean[k - 1]
            pv = filt_var[k - 1] + noise_var
            pred_mean[k] = pm
            pred_var[k] = pv
            x = pm
            for _ in range(newton_max_iter):
                if x >= 0.0:
                    lam = 1.0 / (1.0 + math.exp(-x))
                else:
                    ex = math.exp(x)
                    lam = ex / (1.0 + ex)
                grad = counts[k - 1] - n_trials * lam - (x - pm) / pv
                curv = n_trials * lam * (1.0 - lam) + 1.0 / pv
                step = grad / curv
                if step > 10.0:
                    step = 10.0
                elif step < -10.0:
                    step = -10.0
                x += step
                if abs(step) <= newton_tol:
                    break
            if x >= 0.0:
                lam = 1.0 / (1.0 + math.exp(-x))
            else:
                ex = math.exp(x)
                lam = ex / (1.0 + ex)
            filt_mean[k] = x
            filt_var[k] = 1.0 / (1.0 / pv + n_trials * lam * (1.0 - lam))

        smooth_mean[n - 1] = filt_mean[n - 1]
        smooth_var[n - 1] = filt_var[n - 1]
        for k in range(n - 2, -1, -1):
            a = filt_var[k] / pred_var[k + 1]
            gain[k] = a
            smooth_mean[k] = filt_mean[k] + a * (smooth_mean[k + 1] - pred_mean[k + 1])
            smooth_var[k] = filt_var[k] + a * a * (smooth_var[k + 1] - pred_var[k + 1])

        acc = 0.0
        for k in range(1, n):
            diff = smooth_mean[k] - smooth_mean[k - 1]
            lag_cov = gain[k - 1] * smooth_var[k]
            acc += diff * diff + smooth_var[k] + smooth_var[k - 1] - 2.0 * lag_cov
        new_var = acc / n_bins
        if new_var < 1e-12:
            new_var = 1e-12
        done = abs(new_var - noise_var) <= var_tol * noise_var
        noise_var = new_var
        if done:
            converged = True
            break

    return (smooth_mean[1:].copy(), smooth_var[1:].copy(), noise_var,
            iteration, converged)


rw_em_python = _rw_em_core
rw_em = njit(cache=False)(_rw_em_core) if USING_NUMBA else _rw_em_core
