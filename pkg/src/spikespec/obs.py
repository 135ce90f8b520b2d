"""Binary spike observations and their logit-domain summaries.

A raster holds Bernoulli draws for ``L`` repeated trials of a ``J``-channel
point process. The per-bin ensemble mean is the sufficient statistic used by
all estimators; tapering is carried out in the logit domain and mapped back
through the logistic function so that tapered values remain valid
probabilities, with saturated bins (empty or full across all trials) passed
through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

__all__ = [
    "SpikeRaster",
    "EnsembleMean",
    "ensemble_mean",
    "logit_estimate",
    "clipped_logit",
    "taper_ensemble_mean",
    "taper_all_windows",
    "simulate_spikes",
]


@dataclass(frozen=True)
class SpikeRaster:
    """Binary spike indicators for repeated trials.

    Parameters
    ----------
    spikes : ndarray, shape (K, J, L), uint8
        ``spikes[k, j, l]`` is 1 when channel ``j`` spiked in bin ``k`` of
        trial ``l``.
    bin_width : float
        Bin duration in seconds.
    """

    spikes: np.ndarray
    bin_width: float

    def __post_init__(self):
        spikes = np.asarray(self.spikes)
        if spikes.ndim != 3:
            raise ValueError("spikes must have shape (bins, channels, trials)")
        if spikes.size and not np.isin(spikes, (0, 1)).all():
            raise ValueError("spikes must be binary")
        if not self.bin_width > 0.0:
            raise ValueError("bin_width must be positive")
        object.__setattr__(self, "spikes", spikes.astype(np.uint8))

    @property
    def n_bins(self) -> int:
        return self.spikes.shape[0]

    @property
    def n_channels(self) -> int:
        return self.spikes.shape[1]

    @property
    def n_trials(self) -> int:
        return self.spikes.shape[2]

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.bin_width


@dataclass(frozen=True)
class EnsembleMean:
    """Per-bin spiking fraction across trials.

    ``values`` lie in [0, 1] on the grid 0, 1/L, ..., 1.
    """

    values: np.ndarray
    n_trials: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("values must have shape (bins, channels)")
        if self.n_trials < 1:
            raise ValueError("n_trials must be positive")
        if values.size:
            if values.min() < 0.0 or values.max() > 1.0:
                raise ValueError("ensemble means must lie in [0, 1]")
            counts = values * self.n_trials
            if not np.allclose(counts, np.round(counts), atol=1e-6):
                raise ValueError("ensemble means must be multiples of 1/n_trials")
        object.__setattr__(self, "values", values)

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


def ensemble_mean(raster: SpikeRaster) -> EnsembleMean:
    """Average the raster across trials."""
    values = raster.spikes.mean(axis=2, dtype=np.float64)
    return EnsembleMean(values=values, n_trials=raster.n_trials)


def logit_estimate(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Log-odds of ensemble means with explicit saturation tagging.

    Parameters
    ----------
    values : array_like
        Ensemble means in [0, 1].

    Returns
    -------
    logits : ndarray
        ``log(v / (1 - v))`` where defined; 0.0 placeholder at saturated
        entries (consult the mask before use).
    saturated : ndarray of bool
        True where the input is exactly 0 or 1, so the log-odds are not
        identified at this trial count.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValueError("ensemble means must lie in [0, 1]")
    saturated = (values == 0.0) | (values == 1.0)
    safe = np.where(saturated, 0.5, values)
    return logit(safe) * ~saturated, saturated


def clipped_logit(values: np.ndarray, bound: float = 10.0) -> np.ndarray:
    """Log-odds clipped to ``[-bound, bound]``, saturations mapped to the rim.

    This is the always-defined variant used by the empirical scaling
    analysis; within the clip bound it agrees with `logit_estimate`.
    """
    if not bound > 0.0:
        raise ValueError("bound must be positive")
    values = np.asarray(values, dtype=np.float64)
    if values.size and (values.min() < 0.0 or values.max() > 1.0):
        raise ValueError("ensemble means must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        raw = logit(values)
    return np.clip(raw, -bound, bound)


def taper_ensemble_mean(mean: EnsembleMean, taper: np.ndarray, window: int) -> np.ndarray:
    """Taper one window of an ensemble mean in the logit domain.

    Interior values are mapped through
    ``logistic(taper[w] * logit(mean))`` with ``w`` the in-window sample
    index; saturated bins pass through unchanged.

    Parameters
    ----------
    mean : EnsembleMean
    taper : ndarray, shape (W,)
        One taper; ``W`` must divide the number of bins.
    window : int
        Zero-based window index.

    Returns
    -------
    ndarray, shape (W, J)
        Tapered means, still valid probabilities.
    """
    taper = np.asarray(taper, dtype=np.float64)
    if taper.ndim != 1:
        raise ValueError("taper must be one dimensional")
    window_length = taper.shape[0]
    if mean.n_bins % window_length != 0:
        raise ValueError("window length must divide the number of bins")
    n_windows = mean.n_bins // window_length
    if not 0 <= window < n_windows:
        raise ValueError("window index out of range")
    seg = mean.values[window * window_length:(window + 1) * window_length]
    logits, saturated = logit_estimate(seg)
    tapered = expit(taper[:, None] * logits)
    return np.where(saturated, seg, tapered)


def taper_all_windows(mean: EnsembleMean, taper: np.ndarray) -> np.ndarray:
    """Apply `taper_ensemble_mean` to every window and stack the results."""
    taper = np.asarray(taper, dtype=np.float64)
    window_length = taper.shape[0]
    if mean.n_bins % window_length != 0:
        raise ValueError("window length must divide the number of bins")
    n_windows = mean.n_bins // window_length
    out = np.empty_like(mean.values)
    for m in range(n_windows):
        out[m * window_length:(m + 1) * window_length] = taper_ensemble_mean(mean, taper, m)
    return out


def simulate_spikes(latent: np.ndarray, n_trials: int, bin_width: float,
                    rng: np.random.Generator) -> SpikeRaster:
    """Draw Bernoulli trials from a latent log-odds process.

    Parameters
    ----------
    latent : ndarray, shape (K, J)
        Log-odds of spiking per bin and channel; the per-bin probability is
        ``logistic(latent)``.
    n_trials : int
        Number of independent trials sharing the latent process.
    bin_width : float
        Bin duration in seconds.
    rng : numpy.random.Generator
        Source of randomness; trials are drawn from a single deterministic
        stream in (bin, channel, trial) order.
    """
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 2:
        raise ValueError("latent must have shape (bins, channels)")
    if not np.all(np.isfinite(latent)):
        raise ValueError("latent contains non-finite values")
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    prob = expit(latent)
    draws = rng.random(size=latent.shape + (n_trials,))
    spikes = (draws < prob[:, :, None]).astype(np.uint8)
    return SpikeRaster(spikes=spikes, bin_width=bin_width)
