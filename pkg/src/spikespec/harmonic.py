"""Harmonic state representation of windowed evolutionary spectra.

A J-channel latent process is modeled within each analysis window as a mean
plus a sum of harmonics on the grid ``omega_n = n * pi / n_grid``, truncated
at ``max_harmonic - 1``.  The per-window state vector stacks, row-major, the
(2 * max_harmonic - 1) x J coefficient matrix whose rows are
``[means; cos_1; -sin_1; cos_2; -sin_2; ...]`` amplitudes, so channel ``j``
occupies the strided slice ``j::J``.  Spectral matrices are assembled from
second moments of the in-phase/quadrature block pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["HarmonicLayout", "build_basis", "assemble_esd"]


@dataclass(frozen=True)
class HarmonicLayout:
    """Dimensions of the windowed harmonic model.

    Parameters
    ----------
    n_channels : int
        Number of latent channels J.
    window_length : int
        Samples per window W.
    n_windows : int
        Number of windows M; the record length is ``M * W``.
    n_grid : int
        Harmonic grid parameter N; bin spacing is ``pi / N`` radians.
    max_harmonic : int
        Truncation N_max; harmonics ``1 .. N_max - 1`` are modeled.
    """

    n_channels: int
    window_length: int
    n_windows: int
    n_grid: int
    max_harmonic: int

    def __post_init__(self):
        if self.n_channels < 1:
            raise ValueError("n_channels must be positive")
        if self.window_length < 2:
            raise ValueError("window_length must be at least 2")
        if self.n_windows < 1:
            raise ValueError("n_windows must be positive")
        if self.n_grid < 2:
            raise ValueError("n_grid must be at least 2")
        if not 2 <= self.max_harmonic <= self.n_grid:
            raise ValueError("max_harmonic must lie in 2 .. n_grid")

    @property
    def n_samples(self) -> int:
        return self.n_windows * self.window_length

    @property
    def n_coeffs(self) -> int:
        """Harmonic coefficients per channel (mean plus two per harmonic)."""
        return 2 * self.max_harmonic - 1

    @property
    def state_dim(self) -> int:
        return self.n_channels * self.n_coeffs

    @property
    def n_freqs(self) -> int:
        return self.max_harmonic - 1

    def omega(self, harmonic: np.ndarray | int) -> np.ndarray | float:
        """Angular frequency (radians per sample) of a harmonic index."""
        return np.asarray(harmonic) * np.pi / self.n_grid

    def frequencies_hz(self, sample_rate: float) -> np.ndarray:
        n = np.arange(1, self.max_harmonic)
        return n * sample_rate / (2.0 * self.n_grid)

    def cos_block(self, harmonic: int) -> slice:
        """State indices of the in-phase amplitudes of one harmonic."""
        if not 1 <= harmonic <= self.max_harmonic - 1:
            raise ValueError("harmonic out of range")
        j = self.n_channels
        return slice(j * (2 * harmonic - 1), j * 2 * harmonic)

    def sin_block(self, harmonic: int) -> slice:
        """State indices of the quadrature amplitudes of one harmonic."""
        if not 1 <= harmonic <= self.max_harmonic - 1:
            raise ValueError("harmonic out of range")
        j = self.n_channels
        return slice(j * 2 * harmonic, j * (2 * harmonic + 1))

    def mean_block(self) -> slice:
        """State indices of the per-channel window means."""
        return slice(0, self.n_channels)


def build_basis(layout: HarmonicLayout, window: int) -> np.ndarray:
    """Harmonic regression basis of one window against global time.

    Returns the (W, 2 * max_harmonic - 1) matrix with columns
    ``[2 pi / N,  (2 pi / N) cos(omega_n k),  -(2 pi / N) sin(omega_n k)]``
    for harmonics ``n = 1 .. max_harmonic - 1``, evaluated at the global
    sample indices ``k = window * W + 1 .. window * W + W``.

    When ``W`` is a multiple of ``2 N`` the basis is the same for every
    window.
    """
    if not 0 <= window < layout.n_windows:
        raise ValueError("window index out of range")
    scale = 2.0 * np.pi / layout.n_grid
    k = window * layout.window_length + np.arange(1, layout.window_length + 1, dtype=np.float64)
    basis = np.empty((layout.window_length, layout.n_coeffs))
    basis[:, 0] = scale
    for n in range(1, layout.max_harmonic):
        phase = layout.omega(n) * k
        basis[:, 2 * n - 1] = scale * np.cos(phase)
        basis[:, 2 * n] = -scale * np.sin(phase)
    return basis


def assemble_esd(second_moment: np.ndarray, layout: HarmonicLayout) -> np.ndarray:
    """Spectral matrices of one window from a state second-moment matrix.

    For each harmonic the J x J cross-spectral matrix is
    ``(pi / N) * ((R_cc + R_ss) + 1j * (R_sc - R_cs))`` built from the
    in-phase (c) and quadrature (s) blocks of the second moment ``R``.  The
    result is Hermitian positive semidefinite whenever ``R`` is symmetric
    positive semidefinite.

    Parameters
    ----------
    second_moment : ndarray, shape (state_dim, state_dim)
        Symmetric second-moment matrix of the window state.
    layout : HarmonicLayout

    Returns
    -------
    ndarray, shape (max_harmonic - 1, J, J), complex
    """
    second_moment = np.asarray(second_moment, dtype=np.float64)
    d = layout.state_dim
    if second_moment.shape != (d, d):
        raise ValueError("second moment has wrong shape for layout")
    scale = np.abs(second_moment).max()
    asym = np.abs(second_moment - second_moment.T).max()
    if asym > 1e-8 * max(scale, 1e-300):
        raise ValueError("second moment is not symmetric")
    r = 0.5 * (second_moment + second_moment.T)

    out = np.empty((layout.n_freqs, layout.n_channels, layout.n_channels), dtype=np.complex128)
    norm = np.pi / layout.n_grid
    for n in range(1, layout.max_harmonic):
        cb = layout.cos_block(n)
        sb = layout.sin_block(n)
        r_cc = r[cb, cb]
        r_ss = r[sb, sb]
        r_cs = r[cb, sb]
        r_sc = r[sb, cb]
        out[n - 1] = norm * ((r_cc + r_ss) + 1j * (r_sc - r_cs))
    return out
