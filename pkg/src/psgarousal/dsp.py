"""Numerical kernels shared by the feature extractors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """One-sided power spectrum on bins ``k * bin_hz`` for k = 0..N//2."""

    bin_hz: float
    power: np.ndarray
    fs: float

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.power.shape[-1]) * self.bin_hz

    @property
    def nyquist(self) -> float:
        return self.fs / 2.0

    @property
    def total(self) -> float:
        return float(self.power.sum())


@dataclass(frozen=True)
class StatMoments:
    min: float
    max: float
    range: float
    mean: float
    median: float
    variance: float
    std: float
    cv: float
    skewness: float
    kurtosis: float


def _as_signal(x, min_len: int = 1, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if x.shape[0] < min_len:
        raise ValueError(f"{name} needs at least {min_len} samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def _is_flat(x: np.ndarray) -> bool:
    return x.size == 0 or x.max() == x.min()


def periodogram(x, fs: float, window: str = "boxcar") -> Spectrum:
    """Mean-removed one-sided periodogram.

    Bins sum to the mean square of the (windowed) mean-removed signal. The
    default boxcar keeps an on-bin sinusoid in a single bin; ``"hann"``
    trades that for lower far-off leakage.
    """
    x = _as_signal(x, min_len=16)
    n = x.shape[0]
    if _is_flat(x):
        return Spectrum(fs / n, np.zeros(n // 2 + 1), float(fs))
    xc = x - x.mean()
    if window == "hann":
        xc = xc * np.hanning(n)
    elif window != "boxcar":
        raise ValueError(f"unknown window {window!r}")
    spec = np.fft.rfft(xc)
    power = (spec.real**2 + spec.imag**2) / float(n) ** 2
    if n % 2 == 0:
        power[1:-1] *= 2.0
    else:
        power[1:] *= 2.0
    return Spectrum(fs / n, power, float(fs))


def _band_mask(freqs: np.ndarray, nyquist: float, lo: float, hi: float) -> np.ndarray:
    mask = (freqs >= lo) & (freqs < hi)
    if hi >= nyquist:
        # half-open bands reaching Nyquist keep the Nyquist bin
        mask |= (freqs == nyquist) & (freqs >= lo)
    return mask


def band_power(s: Spectrum, band) -> float:
    """Sum of spectral power over bins with ``lo <= f < hi``.

    A band whose upper edge reaches or exceeds Nyquist includes the Nyquist bin.
    """
    lo, hi = float(band[0]), float(band[1])
    if lo < 0 or hi < lo or lo > s.nyquist:
        raise ValueError(f"invalid band [{lo}, {hi}) for Nyquist {s.nyquist}")
    if lo == hi:
        return 0.0
    return float(s.power[_band_mask(s.freqs, s.nyquist, lo, hi)].sum())


def moving_average(x, window: int) -> np.ndarray:
    """Centered moving average; windows are truncated at the signal edges."""
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    x = _as_signal(x, name="x")
    window = int(window)
    if window == 1:
        return x.copy()
    half = window // 2
    n = x.shape[0]
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo)
    if _is_flat(x):
        out[:] = x[0]
    return out


def stat_moments(x) -> StatMoments:
    """Descriptive statistics with population (1/N) conventions.

    Kurtosis is non-excess (Gaussian -> 3). Zero-variance input reports
    the shape moments as 0. cv is 0 for zero variance or a mean of exactly 0.
    """
    x = _as_signal(x)
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return StatMoments(lo, hi, 0.0, lo, lo, 0.0, 0.0, 0.0, 0.0, 0.0)
    mean = float(x.mean())
    d = x - mean
    d2 = d * d
    m2 = float(d2.mean())
    m3 = float((d2 * d).mean())
    m4 = float((d2 * d2).mean())
    std = m2**0.5
    if m2 > 0:
        skew = m3 / m2**1.5
        kurt = m4 / (m2 * m2)
    else:
        skew = kurt = 0.0
    cv = std / abs(mean) if mean != 0 else 0.0
    return StatMoments(lo, hi, hi - lo, mean, float(np.median(x)), m2, std, cv, skew, kurt)


def pearson(x, y) -> float:
    """Pearson correlation; 0 when either input has zero variance."""
    x = _as_signal(x, min_len=2, name="x")
    y = _as_signal(y, min_len=2, name="y")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if _is_flat(x) or _is_flat(y):
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt(np.dot(xc, xc) * np.dot(yc, yc))
    if den == 0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / den, -1.0, 1.0))


def corr_matrix(rows: np.ndarray) -> np.ndarray:
    """Pairwise :func:`pearson` matrix of the rows of a 2-D array (unit diagonal)."""
    rows = np.asarray(rows, dtype=np.float64)
    xc = rows - rows.mean(axis=1, keepdims=True)
    flat = rows.max(axis=1) == rows.min(axis=1)
    norms = np.sqrt(np.einsum("ij,ij->i", xc, xc))
    norms[flat] = 1.0
    xn = xc / norms[:, None]
    xn[flat] = 0.0
    c = np.clip(xn @ xn.T, -1.0, 1.0)
    c = (c + c.T) / 2.0
    np.fill_diagonal(c, 1.0)
    return c


def _lagged_dot(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    # sum_n x[n] * y[n + lag] over the overlapping region
    if lag >= 0:
        return float(np.dot(x[: x.shape[0] - lag], y[lag:]))
    return float(np.dot(x[-lag:], y[: y.shape[0] + lag]))


def _fast_len(target: int) -> int:
    best = 1 << max(0, (target - 1).bit_length())
    p5 = 1
    while p5 < best:
        p35 = p5
        while p35 < best:
            p = p35
            while p < target:
                p *= 2
            best = min(best, p)
            p35 *= 3
        p5 *= 5
    return best


def _pick_lag(xc: np.ndarray, yc: np.ndarray, cc: np.ndarray, max_lag: int) -> int:
    nfft = cc.shape[0]
    lags = np.arange(-max_lag, max_lag + 1)
    vals = np.abs(cc[lags % nfft])
    best = vals.max()
    # FFT values are approximate: settle near-ties with exact dot products
    cands = lags[vals >= best * (1.0 - 1e-6)]
    exact = np.array([abs(_lagged_dot(xc, yc, int(l))) for l in cands])
    winners = cands[exact == exact.max()]
    order = np.lexsort((winners, np.abs(winners)))
    return int(winners[order[0]])


def xcorr_lags(signals, pairs, max_lag: int) -> np.ndarray:
    """:func:`xcorr_max_lag` for many ``(i, j)`` row pairs of a 2-D array.

    Each row is transformed once, which is what makes per-epoch interaction
    features affordable.
    """
    sig = np.asarray(signals, dtype=np.float64)
    if sig.ndim != 2:
        raise ValueError("signals must be a 2-D array")
    n = sig.shape[1]
    max_lag = int(max_lag)
    if max_lag < 0 or max_lag >= n:
        raise ValueError(f"max_lag must be in [0, {n - 1}], got {max_lag}")
    if not np.all(np.isfinite(sig)):
        raise ValueError("signals contain non-finite values")
    flat = sig.max(axis=1) == sig.min(axis=1)
    centred = sig - sig.mean(axis=1, keepdims=True)
    # padding to n + max_lag keeps circular wrap-around out of the searched lags
    nfft = _fast_len(n + max_lag)
    spectra = {}
    out = np.zeros(len(pairs), dtype=np.int64)
    for k, (i, j) in enumerate(pairs):
        if flat[i] or flat[j]:
            continue
        for r in (i, j):
            if r not in spectra:
                spectra[r] = np.fft.rfft(centred[r], nfft)
        cc = np.fft.irfft(np.conj(spectra[i]) * spectra[j], nfft)
        out[k] = _pick_lag(centred[i], centred[j], cc, max_lag)
    return out


def xcorr_max_lag(x, y, max_lag: int) -> int:
    """Lag maximising ``|sum_n x~[n] y~[n+lag]|`` over ``|lag| <= max_lag``.

    ``x~`` and ``y~`` are the mean-removed inputs, so ``y[n] = x[n - d]``
    gives ``+d``. Ties go to the smallest ``|lag|``, then to the negative lag.
    """
    x = _as_signal(x, min_len=1, name="x")
    y = _as_signal(y, min_len=1, name="y")
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    return int(xcorr_lags(np.vstack([x, y]), [(0, 1)], max_lag)[0])


def sym_eigenvalues(m) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix, sorted descending."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite values")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-9:
        raise ValueError("matrix is not symmetric within 1e-9")
    return np.linalg.eigvalsh((m + m.T) / 2.0)[::-1].copy()


def safe_log(v: float) -> float:
    """Natural log with nonpositive arguments mapped to ``log(1e-12)``."""
    return float(np.log(v)) if v > 0 else float(np.log(LOG_FLOOR))
