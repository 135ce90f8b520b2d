"""Discrete prolate spheroidal tapers and direct multitaper spectral estimation.

The tapers are eigenvectors of the classic symmetric tridiagonal matrix whose
top eigenvectors maximize spectral concentration in the design band
``|f| <= halfbandwidth / window_length`` (cycles per sample).  Spectral
concentrations are computed by exact quadrature of each taper's spectral
window over the design band.

Spectral estimates are reported on the interior harmonic grid
``omega_n = n * pi / n_grid`` for ``n = 1 .. max_harmonic - 1`` (DC and
Nyquist excluded) and are normalized so that summing the diagonal estimate
over the full symmetric grid times the bin width recovers the windowed
sample variance of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "TaperSet",
    "EsdSeries",
    "compute_dpss",
    "direct_multitaper_esd",
]

_exp_basis_cache: dict[tuple[int, int, int], np.ndarray] = {}


@dataclass(frozen=True)
class TaperSet:
    """A family of orthonormal tapers with their spectral concentrations.

    Parameters
    ----------
    tapers : ndarray, shape (n_tapers, window_length)
        Rows are unit-norm tapers, ordered by decreasing concentration.
    concentrations : ndarray, shape (n_tapers,)
        Fraction of each taper's spectral power inside the design band,
        strictly decreasing and strictly inside (0, 1).
    halfbandwidth : float
        Time-halfbandwidth product of the family.
    """

    tapers: np.ndarray
    concentrations: np.ndarray
    halfbandwidth: float

    def __post_init__(self):
        tapers = np.asarray(self.tapers, dtype=np.float64)
        conc = np.asarray(self.concentrations, dtype=np.float64)
        if tapers.ndim != 2:
            raise ValueError("tapers must be a (count, window_length) array")
        if conc.shape != (tapers.shape[0],):
            raise ValueError("one concentration per taper required")
        object.__setattr__(self, "tapers", tapers)
        object.__setattr__(self, "concentrations", conc)
        gram = tapers @ tapers.T
        if not np.allclose(gram, np.eye(tapers.shape[0]), atol=1e-8):
            raise ValueError("tapers must be orthonormal")
        if not (np.all(conc > 0.0) and np.all(conc < 1.0)):
            raise ValueError("concentrations must lie strictly in (0, 1)")
        if np.any(np.diff(conc) >= 0.0):
            raise ValueError("concentrations must be strictly decreasing")

    @property
    def n_tapers(self) -> int:
        return self.tapers.shape[0]

    @property
    def window_length(self) -> int:
        return self.tapers.shape[1]


@dataclass(frozen=True)
class EsdSeries:
    """Per-window spectral density matrices on the interior harmonic grid.

    Parameters
    ----------
    values : ndarray, shape (n_windows, max_harmonic - 1, J, J), complex
        ``values[m, n - 1]`` is the estimated cross-spectral matrix of the
        J-variate process in window ``m`` at ``omega_n = n * pi / n_grid``.
    window_length : int
        Samples per window.
    n_grid : int
        Half the number of harmonic grid points spanning one cycle; the bin
        spacing is ``pi / n_grid`` radians (``sample_rate / (2 n_grid)`` Hz).
    sample_rate : float
        Samples per second.
    """

    values: np.ndarray
    window_length: int
    n_grid: int
    sample_rate: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 4 or values.shape[2] != values.shape[3]:
            raise ValueError("values must have shape (windows, bins, J, J)")
        if values.shape[1] < 1 or values.shape[1] > self.n_grid - 1:
            raise ValueError("bin count must lie in 1 .. n_grid - 1")
        if self.window_length < 1 or self.n_grid < 2:
            raise ValueError("window_length and n_grid must be positive")
        if not self.sample_rate > 0.0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "values", values)

    @property
    def n_windows(self) -> int:
        return self.values.shape[0]

    @property
    def n_freqs(self) -> int:
        return self.values.shape[1]

    @property
    def max_harmonic(self) -> int:
        return self.values.shape[1] + 1

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    def frequencies_hz(self) -> np.ndarray:
        """Bin center frequencies in Hz for the interior grid."""
        n = np.arange(1, self.max_harmonic)
        return n * self.sample_rate / (2.0 * self.n_grid)

    def validate(self, rtol: float = 1e-8) -> None:
        """Raise if any matrix is non-Hermitian or indefinite beyond ``rtol``.

        The tolerance is relative to the largest magnitude in the series.
        """
        v = self.values
        scale = np.abs(v).max() if v.size else 0.0
        tol = rtol * max(scale, 1e-300)
        if np.abs(v - np.conj(np.swapaxes(v, 2, 3))).max() > tol:
            raise ValueError("spectral matrices are not Hermitian")
        herm = 0.5 * (v + np.conj(np.swapaxes(v, 2, 3)))
        eigs = np.linalg.eigvalsh(herm)
        if eigs.min() < -tol:
            raise ValueError("spectral matrices are not positive semidefinite")


def compute_dpss(window_length: int, halfbandwidth: float, n_tapers: int) -> TaperSet:
    """Compute the leading discrete prolate spheroidal tapers.

    Parameters
    ----------
    window_length : int
        Taper length in samples.
    halfbandwidth : float
        Time-halfbandwidth product; the design band is
        ``|f| <= halfbandwidth / window_length`` cycles per sample.
    n_tapers : int
        Number of leading tapers to return.  Must not exceed
        ``2 * halfbandwidth`` (the usable taper count for the band).

    Returns
    -------
    TaperSet
        Orthonormal tapers ordered by decreasing concentration.  Each taper's
        first nonzero element is positive.
    """
    if window_length < 2:
        raise ValueError("window_length must be at least 2")
    if not halfbandwidth > 0.0:
        raise ValueError("halfbandwidth must be positive")
    if n_tapers < 1:
        raise ValueError("n_tapers must be at least 1")
    if n_tapers > 2 * halfbandwidth:
        raise ValueError("taper count exceeds usable band")
    if window_length < 2 * n_tapers:
        raise ValueError("window_length too short for requested taper count")

    w = float(halfbandwidth) / window_length
    t = np.arange(window_length, dtype=np.float64)
    diag = ((window_length - 1.0 - 2.0 * t) / 2.0) ** 2 * np.cos(2.0 * np.pi * w)
    off = t[1:] * (window_length - t[1:]) / 2.0
    _, vecs = eigh_tridiagonal(
        diag, off, select="i",
        select_range=(window_length - n_tapers, window_length - 1),
    )
    tapers = vecs[:, ::-1].T.copy()

    for p in range(n_tapers):
        nz = np.nonzero(tapers[p])[0]
        if nz.size and tapers[p, nz[0]] < 0.0:
            tapers[p] = -tapers[p]

    concentrations = _band_concentrations(tapers, w)
    return TaperSet(tapers=tapers, concentrations=concentrations, halfbandwidth=float(halfbandwidth))


def _band_concentrations(tapers: np.ndarray, w: float) -> np.ndarray:
    """Exact integral of each taper's spectral window over ``|f| <= w``.

    Uses the autocorrelation representation of the spectral window, so the
    quadrature is exact up to rounding.
    """
    n_tapers, window_length = tapers.shape
    lags = np.arange(1, window_length, dtype=np.float64)
    kernel = 2.0 * w * np.sinc(2.0 * w * lags)
    nfft = 1
    while nfft < 2 * window_length:
        nfft *= 2
    conc = np.empty(n_tapers)
    for p in range(n_tapers):
        spec = np.abs(np.fft.rfft(tapers[p], nfft)) ** 2
        acf = np.fft.irfft(spec, nfft)[:window_length]
        conc[p] = 2.0 * w * acf[0] + 2.0 * np.dot(acf[1:], kernel)
    return conc


def _harmonic_exponentials(window_length: int, n_grid: int, max_harmonic: int) -> np.ndarray:
    """Window-local complex exponentials on the interior harmonic grid.

    Returns a (window_length, max_harmonic - 1) array with entry
    ``exp(-1j * omega_n * k)`` for in-window sample index ``k = 1 .. W``.
    Window-to-window phase offsets cancel in all cross products, so the
    local index is sufficient for spectral estimation.
    """
    key = (window_length, n_grid, max_harmonic)
    cached = _exp_basis_cache.get(key)
    if cached is not None:
        return cached
    k = np.arange(1, window_length + 1, dtype=np.float64)
    omega = np.arange(1, max_harmonic, dtype=np.float64) * np.pi / n_grid
    basis = np.exp(-1j * np.outer(k, omega))
    if len(_exp_basis_cache) > 8:
        _exp_basis_cache.clear()
    _exp_basis_cache[key] = basis
    return basis


def direct_multitaper_esd(
    series: np.ndarray,
    tapers: TaperSet,
    n_grid: int,
    max_harmonic: int,
    sample_rate: float,
) -> EsdSeries:
    """Multitaper cross-spectral estimate of a directly observed series.

    Each window is demeaned per channel, tapered, and projected on the
    interior harmonic grid; taper cross-products are averaged.  The estimate
    satisfies the variance contract: twice the sum of a diagonal entry over
    the interior grid times the bin width ``pi / n_grid`` approximates the
    windowed sample variance of that channel.

    Parameters
    ----------
    series : ndarray, shape (K, J)
        Real-valued samples; ``K`` must be a multiple of the taper length.
    tapers : TaperSet
        Taper family; its window length sets the window segmentation.
    n_grid : int
        Harmonic grid parameter (bin spacing ``pi / n_grid``).
    max_harmonic : int
        One past the highest reported harmonic; ``max_harmonic - 1`` interior
        bins are returned.
    sample_rate : float
        Samples per second, attached to the result.

    Returns
    -------
    EsdSeries
    """
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    if series.ndim != 2:
        raise ValueError("series must be one or two dimensional")
    if not np.all(np.isfinite(series)):
        raise ValueError("series contains non-finite values")
    window_length = tapers.window_length
    n_samples, n_channels = series.shape
    if n_samples == 0 or n_samples % window_length != 0:
        raise ValueError("series length must be a positive multiple of the window length")
    if max_harmonic < 2 or max_harmonic > n_grid:
        raise ValueError("max_harmonic must lie in 2 .. n_grid")

    n_windows = n_samples // window_length
    n_bins = max_harmonic - 1
    basis = _harmonic_exponentials(window_length, n_grid, max_harmonic)
    taper_mat = tapers.tapers
    n_tapers = tapers.n_tapers

    values = np.empty((n_windows, n_bins, n_channels, n_channels), dtype=np.complex128)
    norm = 1.0 / (2.0 * np.pi * n_tapers)
    for m in range(n_windows):
        seg = series[m * window_length:(m + 1) * window_length]
        seg = seg - seg.mean(axis=0, keepdims=True)
        tapered = taper_mat[:, :, None] * seg[None, :, :]
        coeffs = np.tensordot(tapered, basis, axes=([1], [0]))
        values[m] = norm * np.einsum("prn,ptn->ntr", np.conj(coeffs), coeffs)
    return EsdSeries(values=values, window_length=window_length,
                     n_grid=n_grid, sample_rate=sample_rate)
