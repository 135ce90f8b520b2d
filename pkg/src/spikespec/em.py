"""Expectation-maximization for windowed harmonic state-space models.

The per-window state (see `spikespec.harmonic`) evolves as a damped random
walk ``w_m = alpha * w_{m-1} + noise`` with diagonal, window-specific process
noise.  Observations are Bernoulli spike ensembles through a logistic link,
optionally mixed with directly observed Gaussian channels.  The E-step runs
a Newton-based Gaussian approximate filter and a fixed-interval smoother
with lag-one covariances; the M-step updates the process-noise diagonals
under a log-domain smoothness prior that couples adjacent harmonics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solveh_banded

from .harmonic import HarmonicLayout, build_basis

__all__ = [
    "EmConfig",
    "StateEstimate",
    "WindowModel",
    "NewtonError",
    "EmError",
    "window_model",
    "forward_filter_step",
    "smooth",
    "mstep_update",
    "run_em",
]


class NewtonError(RuntimeError):
    """Inner Newton solve failed to converge; carries diagnostics."""

    def __init__(self, message: str, *, iterations: int, grad_norm: float):
        super().__init__(f"{message} (iterations {iterations}, gradient {grad_norm:.3e})")
        self.iterations = iterations
        self.grad_norm = grad_norm


class EmError(RuntimeError):
    """EM run failed; message carries window / iteration context."""


@dataclass(frozen=True)
class EmConfig:
    """Settings for the state-space EM.

    Parameters
    ----------
    alpha : float
        State decay per window, in [0, 1].
    rho : float
        Strength of the log-domain smoothness prior coupling process-noise
        entries of adjacent harmonics.
    q_init : float
        Initial process-noise diagonal value.
    q_floor : float
        Lower bound applied to process-noise entries.
    max_iterations : int
        EM iteration cap.
    objective_tol : float
        Relative objective change for early stopping.
    newton_tol : float
        Sup-norm gradient tolerance for inner Newton solves.
    newton_max_iter : int
        Iteration cap for inner Newton solves.
    obs_mode : str
        "spiking" for Bernoulli ensembles only, "mixed" when some channels
        are observed directly with Gaussian noise.
    obs_noise_var : float or None
        Observation noise variance of directly observed channels (mixed
        mode only).
    continuous_channels : tuple of int
        Channel indices observed directly (mixed mode only).
    """

    alpha: float = 0.4
    rho: float = 0.2
    q_init: float = 0.1
    q_floor: float = 1e-10
    max_iterations: int = 50
    objective_tol: float = 1e-6
    newton_tol: float = 1e-8
    newton_max_iter: int = 100
    obs_mode: str = "spiking"
    obs_noise_var: float | None = None
    continuous_channels: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.rho < 0.0:
            raise ValueError("rho must be nonnegative")
        if not self.q_init > 0.0 or not self.q_floor > 0.0:
            raise ValueError("q_init and q_floor must be positive")
        if self.max_iterations < 1 or self.newton_max_iter < 1:
            raise ValueError("iteration caps must be positive")
        if not self.objective_tol > 0.0 or not self.newton_tol > 0.0:
            raise ValueError("tolerances must be positive")
        if self.obs_mode not in ("spiking", "mixed"):
            raise ValueError("obs_mode must be 'spiking' or 'mixed'")
        if self.obs_mode == "mixed":
            if self.obs_noise_var is None or not self.obs_noise_var > 0.0:
                raise ValueError("mixed mode requires a positive obs_noise_var")
            if len(self.continuous_channels) == 0:
                raise ValueError("mixed mode requires continuous channel indices")
            if len(set(self.continuous_channels)) != len(self.continuous_channels):
                raise ValueError("continuous channel indices must be unique")
        elif len(self.continuous_channels):
            raise ValueError("continuous channels require mixed mode")


@dataclass(frozen=True)
class StateEstimate:
    """Smoothed state trajectory with second-order statistics.

    Parameters
    ----------
    means : ndarray, shape (M, state_dim)
        Smoothed state means per window.
    covariances : ndarray, shape (M, state_dim, state_dim)
        Smoothed state covariances per window.
    lag_one_covariances : ndarray, shape (M, state_dim, state_dim)
        Smoothed cross-covariance of window ``m`` with window ``m - 1``;
        the first entry is all zeros.
    process_noise : ndarray, shape (M, state_dim)
        Final process-noise diagonals.
    diagnostics : dict
        Per-run record: objective trace, Newton iteration counts, EM
        iteration count, convergence flag, worst objective decrease.
    """

    means: np.ndarray
    covariances: np.ndarray
    lag_one_covariances: np.ndarray
    process_noise: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_windows(self) -> int:
        return self.means.shape[0]

    def second_moments(self) -> np.ndarray:
        """Per-window ``covariance + mean mean^T`` matrices."""
        return self.covariances + np.einsum("mi,mj->mij", self.means, self.means)


def _symmetrize_psd(mat: np.ndarray, floor_scale: float = 1e-12) -> np.ndarray:
    """Symmetrize and, when a Cholesky probe fails, floor the spectrum."""
    sym = 0.5 * (mat + mat.T)
    try:
        np.linalg.cholesky(sym)
        return sym
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(sym)
        floor = floor_scale * max(float(np.trace(sym)), floor_scale)
        vals = np.maximum(vals, floor)
        return (vecs * vals) @ vecs.T


def _log1pexp(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class WindowModel:
    """Observation terms of one analysis window.

    Splits channels into Bernoulli ensembles and directly observed Gaussian
    channels and evaluates the observation log likelihood, its gradient, and
    its negative Hessian in the strided state coordinates.  Use the
    `window_model` factory rather than constructing directly.
    """

    def __init__(self, design: np.ndarray, spike_means: np.ndarray,
                 n_trials: int, continuous: np.ndarray | None,
                 spike_cols: np.ndarray, cont_cols: np.ndarray,
                 obs_noise_var: float | None):
        self.design = design
        self.spike_means = spike_means
        self.n_trials = n_trials
        self.continuous = continuous
        self.spike_cols = spike_cols
        self.cont_cols = cont_cols
        self.obs_noise_var = obs_noise_var
        self.n_channels = len(spike_cols) + len(cont_cols)
        self._gauss_curv = None
        if len(cont_cols):
            self._gauss_curv = design.T @ design / obs_noise_var

    @property
    def state_dim(self) -> int:
        return self.design.shape[1] * self.n_channels

    def log_lik(self, state: np.ndarray) -> float:
        eta = self.predict(state)
        total = 0.0
        if len(self.spike_cols):
            eta_s = eta[:, self.spike_cols]
            total += self.n_trials * float(
                np.sum(self.spike_means * eta_s - _log1pexp(eta_s)))
        if len(self.cont_cols):
            resid = self.continuous - eta[:, self.cont_cols]
            total += -0.5 / self.obs_noise_var * float(np.sum(resid * resid))
        return total

    def grad_lik(self, state: np.ndarray) -> np.ndarray:
        eta = self.predict(state)
        grad = np.zeros((self.design.shape[1], self.n_channels))
        if len(self.spike_cols):
            resid = self.spike_means - _sigmoid(eta[:, self.spike_cols])
            grad[:, self.spike_cols] = self.n_trials * (self.design.T @ resid)
        if len(self.cont_cols):
            resid = self.continuous - eta[:, self.cont_cols]
            grad[:, self.cont_cols] = self.design.T @ resid / self.obs_noise_var
        return grad.reshape(-1)

    def grad_and_curvature(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient and negative Hessian of the log likelihood at ``state``."""
        j = self.n_channels
        eta = self.predict(state)
        grad = np.zeros((self.design.shape[1], j))
        curv = np.zeros((self.state_dim, self.state_dim))
        if len(self.spike_cols):
            lam = _sigmoid(eta[:, self.spike_cols])
            grad[:, self.spike_cols] = self.n_trials * (self.design.T @ (self.spike_means - lam))
            weights = self.n_trials * lam * (1.0 - lam)
            for i, col in enumerate(self.spike_cols):
                block = self.design.T @ (weights[:, i:i + 1] * self.design)
                curv[col::j, col::j] = block
        if len(self.cont_cols):
            resid = self.continuous - eta[:, self.cont_cols]
            grad[:, self.cont_cols] = self.design.T @ resid / self.obs_noise_var
            for col in self.cont_cols:
                curv[col::j, col::j] = self._gauss_curv
        return grad.reshape(-1), curv

    def channel_curvature_blocks(self, state: np.ndarray) -> list:
        """Per-channel negative-Hessian blocks, indexed by channel."""
        j = self.n_channels
        blocks: list = [None] * j
        if len(self.spike_cols):
            eta = self.predict(state)
            lam = _sigmoid(eta[:, self.spike_cols])
            weights = self.n_trials * lam * (1.0 - lam)
            for i, col in enumerate(self.spike_cols):
                blocks[col] = self.design.T @ (weights[:, i:i + 1] * self.design)
        for col in self.cont_cols:
            blocks[col] = self._gauss_curv
        return blocks

    def predict(self, state: np.ndarray) -> np.ndarray:
        """Per-bin latent values implied by a state vector, shape (W, J)."""
        coeff = state.reshape(self.design.shape[1], self.n_channels)
        return self.design @ coeff


def window_model(design: np.ndarray, spike_means: np.ndarray, n_trials: int,
                 continuous: np.ndarray | None = None,
                 continuous_channels: tuple[int, ...] = (),
                 obs_noise_var: float | None = None) -> WindowModel:
    """Build the observation model of one window.

    ``design`` is the window regression basis with its mean column set to 1
    (state means are stored directly).  ``spike_means`` has one column per
    spiking channel; ``continuous`` has one column per entry of
    ``continuous_channels`` (ascending), holding directly observed values.
    """
    design = np.ascontiguousarray(design, dtype=np.float64)
    spike_means = np.asarray(spike_means, dtype=np.float64)
    if spike_means.ndim == 1:
        spike_means = spike_means[:, None]
    cont_cols = np.asarray(sorted(continuous_channels), dtype=int)
    n_channels = spike_means.shape[1] + cont_cols.size
    spike_cols = np.asarray(
        [c for c in range(n_channels) if c not in set(cont_cols.tolist())], dtype=int)
    if cont_cols.size:
        if continuous is None or obs_noise_var is None:
            raise ValueError("continuous channels require observations and a noise variance")
        continuous = np.asarray(continuous, dtype=np.float64)
        if continuous.ndim == 1:
            continuous = continuous[:, None]
        if continuous.shape != (design.shape[0], cont_cols.size):
            raise ValueError("continuous observations have wrong shape")
    if spike_means.shape != (design.shape[0], spike_cols.size):
        raise ValueError("spike means have wrong shape")
    return WindowModel(design=design, spike_means=spike_means, n_trials=n_trials,
                       continuous=continuous, spike_cols=spike_cols,
                       cont_cols=cont_cols, obs_noise_var=obs_noise_var)


def forward_filter_step(model: WindowModel, prior_mean: np.ndarray,
                        prior_cov: np.ndarray, config: EmConfig,
                        init: np.ndarray | None = None):
    """Newton solve for one window's posterior mode and Laplace covariance.

    Maximizes the window log likelihood plus the Gaussian prior term
    ``-(w - prior_mean)^T prior_cov^{-1} (w - prior_mean) / 2`` and returns
    ``(mode, covariance, n_iterations)`` where the covariance is the inverse
    negative Hessian at the mode, symmetrized.

    Raises
    ------
    NewtonError
        When the gradient tolerance is not reached within the iteration cap
        or a line search fails.
    """
    dim = len(prior_mean)
    prior_fact = cho_factor(prior_cov, lower=True)
    prior_inv = cho_solve(prior_fact, np.eye(dim))
    prior_inv = 0.5 * (prior_inv + prior_inv.T)

    def objective(state):
        diff = state - prior_mean
        return model.log_lik(state) - 0.5 * float(diff @ (prior_inv @ diff))

    state = prior_mean.copy() if init is None else np.asarray(init, dtype=float).copy()
    value = objective(state)
    grad_norm = np.inf
    converged = False
    iterations = 0
    hess_fact = None
    for iterations in range(1, config.newton_max_iter + 1):
        grad_lik, curv = model.grad_and_curvature(state)
        grad = grad_lik - prior_inv @ (state - prior_mean)
        grad_norm = float(np.abs(grad).max())
        hess = curv + prior_inv
        try:
            hess_fact = cho_factor(hess, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NewtonError("indefinite curvature in window solve",
                              iterations=iterations, grad_norm=grad_norm) from exc
        if grad_norm <= config.newton_tol:
            converged = True
            break
        step = cho_solve(hess_fact, grad)
        scale = 1.0
        for _ in range(60):
            candidate = state + scale * step
            cand_value = objective(candidate)
            if cand_value >= value:
                break
            scale *= 0.5
        else:
            raise NewtonError("line search failed in window solve",
                              iterations=iterations, grad_norm=grad_norm)
        state = candidate
        value = cand_value
    if not converged:
        raise NewtonError("window solve did not converge",
                          iterations=iterations, grad_norm=grad_norm)

    cov = cho_solve(hess_fact, np.eye(dim))
    cov = _symmetrize_psd(cov)
    return state, cov, iterations


def smooth(filtered_means, filtered_covs, pred_means, pred_covs, alpha):
    """Fixed-interval smoother with lag-one cross-covariances.

    Inputs are per-window sequences from the forward pass.  Returns smoothed
    means, smoothed covariances, lag-one cross-covariances
    ``Cov(w_m, w_{m-1} | all data)`` with a zero first entry, and the
    smoother gain matrices.
    """
    n_windows = len(filtered_means)
    dim = filtered_means[0].shape[0]
    means = np.empty((n_windows, dim))
    covs = np.empty((n_windows, dim, dim))
    gains = np.zeros((n_windows, dim, dim))
    means[-1] = filtered_means[-1]
    covs[-1] = _symmetrize_psd(np.array(filtered_covs[-1]))
    for m in range(n_windows - 2, -1, -1):
        pred_fact = cho_factor(pred_covs[m + 1], lower=True)
        gain = alpha * cho_solve(pred_fact, filtered_covs[m]).T
        means[m] = filtered_means[m] + gain @ (means[m + 1] - pred_means[m + 1])
        cov = filtered_covs[m] + gain @ (covs[m + 1] - pred_covs[m + 1]) @ gain.T
        covs[m] = _symmetrize_psd(cov)
        gains[m] = gain
    lag_one = np.zeros((n_windows, dim, dim))
    for m in range(1, n_windows):
        lag_one[m] = covs[m] @ gains[m - 1].T
    return means, covs, lag_one, gains


def _transition_diag_loads(means, covs, lag_one, alpha):
    """Diagonal of ``E[(w_m - alpha w_{m-1})(w_m - alpha w_{m-1})^T]``.

    The first window is referenced to a zero initial state.
    """
    n_windows, dim = means.shape
    loads = np.empty((n_windows, dim))
    loads[0] = np.diagonal(covs[0]) + means[0] ** 2
    for m in range(1, n_windows):
        cross = np.diagonal(lag_one[m]) + means[m] * means[m - 1]
        loads[m] = (np.diagonal(covs[m]) + means[m] ** 2
                    + alpha ** 2 * (np.diagonal(covs[m - 1]) + means[m - 1] ** 2)
                    - 2.0 * alpha * cross)
    return loads


def mstep_update(loads: np.ndarray, layout: HarmonicLayout, config: EmConfig) -> np.ndarray:
    """Process-noise update for one window from its diagonal loads.

    Maximizes ``-(log q_i + loads_i / q_i) / 2`` summed over entries, minus
    the smoothness prior ``rho * sum (log q_i - log q_{i + 2J})^2`` over
    same-coordinate pairs of adjacent harmonics.  Mean entries carry no
    prior, so with ``rho = 0`` every entry solves to ``q = load`` exactly.
    Solved by Newton in ``u = log q`` with a banded Hessian and
    backtracking; the result is floored at ``config.q_floor``.
    """
    dim = layout.state_dim
    loads = np.asarray(loads, dtype=np.float64)
    if loads.shape != (dim,):
        raise ValueError("loads have wrong length for layout")
    if np.any(loads <= 0.0):
        raise ValueError("diagonal loads must be positive")
    j2 = 2 * layout.n_channels
    rho = config.rho
    pair_lo = np.arange(layout.n_channels, max(dim - j2, layout.n_channels))
    if rho == 0.0 or pair_lo.size == 0:
        return np.maximum(loads, config.q_floor)
    pair_hi = pair_lo + j2

    u = np.log(loads)

    def objective(u_vec):
        val = -0.5 * float(np.sum(u_vec + loads * np.exp(-u_vec)))
        diffs = u_vec[pair_lo] - u_vec[pair_hi]
        return val - rho * float(diffs @ diffs)

    def gradient(u_vec):
        grad = -0.5 * (1.0 - loads * np.exp(-u_vec))
        diffs = u_vec[pair_lo] - u_vec[pair_hi]
        np.add.at(grad, pair_lo, -2.0 * rho * diffs)
        np.add.at(grad, pair_hi, 2.0 * rho * diffs)
        return grad

    value = objective(u)
    converged = False
    for _ in range(config.newton_max_iter):
        grad = gradient(u)
        if np.abs(grad).max() <= config.newton_tol:
            converged = True
            break
        diag = 0.5 * loads * np.exp(-u)
        np.add.at(diag, pair_lo, 2.0 * rho)
        np.add.at(diag, pair_hi, 2.0 * rho)
        bands = np.zeros((j2 + 1, dim))
        bands[0] = diag
        bands[j2, pair_lo] = -2.0 * rho
        step = solveh_banded(bands, grad, lower=True)
        scale = 1.0
        for _ in range(60):
            candidate = u + scale * step
            cand_value = objective(candidate)
            if cand_value >= value:
                break
            scale *= 0.5
        else:
            raise NewtonError("process-noise update line search failed",
                              iterations=config.newton_max_iter,
                              grad_norm=float(np.abs(grad).max()))
        u = candidate
        value = cand_value
    if not converged:
        raise NewtonError("process-noise update did not converge",
                          iterations=config.newton_max_iter,
                          grad_norm=float(np.abs(gradient(u)).max()))
    return np.maximum(np.exp(u), config.q_floor)


def run_em(spike_means: np.ndarray, n_trials: int, layout: HarmonicLayout,
           config: EmConfig, continuous: np.ndarray | None = None) -> StateEstimate:
    """Fit the windowed harmonic state-space model by approximate EM.

    Parameters
    ----------
    spike_means : ndarray, shape (K, n_spiking_channels)
        Per-bin ensemble means (possibly tapered) in [0, 1], one column per
        spiking channel, in channel order after removing any continuous
        channels.
    n_trials : int
        Ensemble size behind the means.
    layout : HarmonicLayout
        Model dimensions; ``layout.n_channels`` counts spiking plus
        continuous channels.
    config : EmConfig
    continuous : ndarray, shape (K, n_continuous), optional
        Directly observed (possibly tapered) values of the channels listed
        in ``config.continuous_channels``, in ascending index order.

    Returns
    -------
    StateEstimate

    Raises
    ------
    EmError
        When an inner solve fails; the message carries the window index and
        EM iteration.
    """
    spike_means = np.asarray(spike_means, dtype=np.float64)
    if spike_means.ndim == 1:
        spike_means = spike_means[:, None]
    cont_cols = np.asarray(sorted(config.continuous_channels), dtype=int)
    if cont_cols.size and (cont_cols.min() < 0 or cont_cols.max() >= layout.n_channels):
        raise ValueError("continuous channel index out of range")
    n_spiking = layout.n_channels - cont_cols.size
    if spike_means.shape != (layout.n_samples, n_spiking):
        raise ValueError("spike_means shape does not match layout")
    if spike_means.size:
        if not np.all(np.isfinite(spike_means)):
            raise ValueError("spike_means contain non-finite values")
        if spike_means.min() < 0.0 or spike_means.max() > 1.0:
            raise ValueError("spike_means must lie in [0, 1]")
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    if cont_cols.size:
        if continuous is None:
            raise ValueError("mixed mode requires continuous observations")
        continuous = np.asarray(continuous, dtype=np.float64)
        if continuous.ndim == 1:
            continuous = continuous[:, None]
        if continuous.shape != (layout.n_samples, cont_cols.size):
            raise ValueError("continuous observations shape does not match layout")
        if not np.all(np.isfinite(continuous)):
            raise ValueError("continuous observations contain non-finite values")
    elif continuous is not None:
        raise ValueError("continuous observations given without mixed mode")

    n_windows = layout.n_windows
    w_len = layout.window_length
    dim = layout.state_dim
    alpha = config.alpha

    design_cache: dict[int, np.ndarray] = {}

    def window_design(m: int) -> np.ndarray:
        key = (m * w_len) % (2 * layout.n_grid)
        design = design_cache.get(key)
        if design is None:
            design = build_basis(layout, m)
            design[:, 0] = 1.0
            design_cache[key] = design
        return design

    models = []
    for m in range(n_windows):
        sl = slice(m * w_len, (m + 1) * w_len)
        models.append(window_model(
            design=window_design(m),
            spike_means=spike_means[sl],
            n_trials=n_trials,
            continuous=continuous[sl] if cont_cols.size else None,
            continuous_channels=tuple(cont_cols.tolist()),
            obs_noise_var=config.obs_noise_var,
        ))

    process_noise = np.full((n_windows, dim), config.q_init)
    warm_starts: list = [None] * n_windows
    objective_trace: list[float] = []
    newton_counts: list[int] = []
    worst_drop = 0.0
    converged = False
    means = covs = lag_one = None

    for iteration in range(1, config.max_iterations + 1):
        filtered_means, filtered_covs = [], []
        pred_means, pred_covs = [], []
        iter_newton = 0
        prev_mean = np.zeros(dim)
        prev_cov = np.zeros((dim, dim))
        for m in range(n_windows):
            pred_mean = alpha * prev_mean
            pred_cov = alpha ** 2 * prev_cov + np.diag(process_noise[m])
            try:
                state, cov, n_newton = forward_filter_step(
                    models[m], pred_mean, pred_cov, config, init=warm_starts[m])
            except NewtonError as exc:
                raise EmError(
                    f"window {m} failed at EM iteration {iteration}: {exc}") from exc
            iter_newton += n_newton
            warm_starts[m] = state
            filtered_means.append(state)
            filtered_covs.append(cov)
            pred_means.append(pred_mean)
            pred_covs.append(pred_cov)
            prev_mean, prev_cov = state, cov

        means, covs, lag_one, _ = smooth(
            filtered_means, filtered_covs, pred_means, pred_covs, alpha)

        loads = np.maximum(_transition_diag_loads(means, covs, lag_one, alpha),
                           config.q_floor)
        new_noise = np.empty_like(process_noise)
        for m in range(n_windows):
            try:
                new_noise[m] = mstep_update(loads[m], layout, config)
            except NewtonError as exc:
                raise EmError(
                    f"process-noise update for window {m} failed at EM "
                    f"iteration {iteration}: {exc}") from exc
        process_noise = new_noise

        objective = _surrogate_objective(
            models, means, covs, loads, process_noise, layout, config)
        newton_counts.append(iter_newton)
        if objective_trace:
            drop = objective_trace[-1] - objective
            worst_drop = max(worst_drop, drop)
            rel_change = abs(objective - objective_trace[-1]) / max(abs(objective_trace[-1]), 1e-12)
        else:
            rel_change = np.inf
        objective_trace.append(objective)
        if rel_change <= config.objective_tol:
            converged = True
            break

    diagnostics = {
        "objective_trace": np.asarray(objective_trace),
        "newton_iterations": np.asarray(newton_counts),
        "em_iterations": len(objective_trace),
        "converged": converged,
        "worst_objective_decrease": worst_drop,
    }
    return StateEstimate(means=means, covariances=covs,
                         lag_one_covariances=lag_one,
                         process_noise=process_noise,
                         diagnostics=diagnostics)


def _surrogate_objective(models, means, covs, loads, process_noise,
                         layout: HarmonicLayout, config: EmConfig) -> float:
    """Complete-data objective at current moments and updated parameters.

    The observation expectation uses a second-order expansion around the
    smoothed mean, with the quadratic term contracted against the smoothed
    covariance through the per-channel curvature blocks.  The same formula
    is applied at every iteration so the trace is comparable across
    iterations.
    """
    j = layout.n_channels
    j2 = 2 * j
    pair_lo = np.arange(j, max(layout.state_dim - j2, j))
    total = 0.0
    for m, model in enumerate(models):
        state = means[m]
        total += model.log_lik(state)
        blocks = model.channel_curvature_blocks(state)
        for col in range(j):
            block = blocks[col]
            if block is None:
                continue
            chan_cov = covs[m][col::j, col::j]
            total -= 0.5 * float(np.einsum("ij,ji->", chan_cov, block))
        q = process_noise[m]
        total += -0.5 * float(np.sum(np.log(q) + loads[m] / q))
        if config.rho > 0.0 and pair_lo.size:
            diffs = np.log(q[pair_lo]) - np.log(q[pair_lo + j2])
            total -= config.rho * float(diffs @ diffs)
    return total
