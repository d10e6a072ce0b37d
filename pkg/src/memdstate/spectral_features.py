"""DFT (bandpower, spectral entropy) and db4 DWT baseline features."""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.signal import welch

from .errors import InvalidBand, ValidationError
from .nonlinear_features import FeatureVector, moments


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low_hz: float
    high_hz: float

    def __post_init__(self):
        if not 0 < self.low_hz < self.high_hz:
            raise InvalidBand(f"band {self.name}: need 0 < low < high")


CANONICAL_BANDS = (
    BandDefinition("delta", 2.0, 4.0),
    BandDefinition("theta", 4.0, 8.0),
    BandDefinition("alpha", 8.0, 13.0),
    BandDefinition("beta", 13.0, 30.0),
    BandDefinition("gamma", 30.0, 45.0),
)
ENTROPY_RANGE = (2.0, 45.0)


def daubechies_lowpass(vanishing_moments: int) -> np.ndarray:
    """Minimum-phase Daubechies lowpass filter from the spectral factorisation.

    Roots of the half-band polynomial P(y) = sum_k C(N-1+k, k) y^k are mapped
    through y = (2 - z - 1/z)/4, the roots inside the unit circle are kept and
    combined with N zeros at z = -1. Returned in analysis (time-reversed) order.
    """
    n = vanishing_moments
    ys = np.roots([comb(n - 1 + k, k) for k in range(n)][::-1])
    zs = []
    for y in ys:
        r = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zs.append(r[np.argmin(np.abs(r))])
    h = np.convolve(np.real(np.poly(zs)), np.real(np.poly([-1.0] * n)))
    h *= np.sqrt(2.0) / h.sum()
    return h[::-1].copy()


DB4_LOW = daubechies_lowpass(4)
DB4_HIGH = np.array([(-1) ** k * DB4_LOW[len(DB4_LOW) - 1 - k] for k in range(len(DB4_LOW))])

DWT_LEVELS = 3
SUBBANDS = ("D1", "D2", "D3", "A3")
DWT_STATS = ("max", "min", "kurtosis", "skewness", "variance", "energy")


@dataclass(frozen=True)
class WaveletDecomposition:
    detail_coeffs: tuple  # D1 (finest) .. D3
    approx_coeffs: np.ndarray  # A3
    levels: int = DWT_LEVELS
    original_length: int = 0

    def subbands(self) -> tuple:
        return tuple(self.detail_coeffs) + (self.approx_coeffs,)


def _analysis_step(x: np.ndarray):
    n = x.size
    # periodic extension: out[k] = sum_j h[j] x[(2k + j) mod n]
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(DB4_LOW.size)[None, :]) % n
    seg = x[idx]
    return seg @ DB4_LOW, seg @ DB4_HIGH


def _synthesis_step(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    n = 2 * a.size
    out = np.zeros(n)
    idx = (2 * np.arange(a.size)[:, None] + np.arange(DB4_LOW.size)[None, :]) % n
    np.add.at(out, idx, a[:, None] * DB4_LOW[None, :] + d[:, None] * DB4_HIGH[None, :])
    return out


def dwt_db4(x, levels: int = DWT_LEVELS) -> WaveletDecomposition:
    """Periodic db4 pyramid; input is zero-padded to a multiple of 2**levels."""
    x = np.asarray(x, dtype=float)
    if x.size < DB4_LOW.size:
        raise ValidationError(f"series of length {x.size} shorter than the db4 filter")
    block = 2 ** levels
    padded = np.concatenate([x, np.zeros((-x.size) % block)])
    details = []
    approx = padded
    for _ in range(levels):
        approx, detail = _analysis_step(approx)
        details.append(detail)
    return WaveletDecomposition(tuple(details), approx, levels, x.size)


def idwt_db4(w: WaveletDecomposition) -> np.ndarray:
    approx = w.approx_coeffs
    for detail in reversed(w.detail_coeffs):
        approx = _synthesis_step(approx, detail)
    return approx[:w.original_length] if w.original_length else approx


def coeff_stats(c) -> np.ndarray:
    """max, min, kurtosis, skewness, variance, energy of one coefficient array."""
    c = np.asarray(c, dtype=float)
    skew, kurt = moments(c)
    return np.array([c.max(), c.min(), kurt, skew, np.var(c), np.sum(c * c)])


def dwt_features(w: WaveletDecomposition, subbands=SUBBANDS) -> np.ndarray:
    bands = dict(zip(SUBBANDS, w.subbands()))
    return np.concatenate([coeff_stats(bands[b]) for b in subbands])


def welch_psd(x, fs: float):
    """Hann-window Welch PSD along the last axis, 50% overlap, segments of min(N, 4 fs)."""
    x = np.asarray(x, dtype=float)
    nperseg = int(min(x.shape[-1], round(4 * fs)))
    return welch(x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
                 detrend=False, scaling="density")


def integrate_psd(freqs, psd, low_hz: float, high_hz: float) -> float:
    """Integral of the piecewise-linear PSD between two frequencies."""
    inner = (freqs > low_hz) & (freqs < high_hz)
    grid = np.concatenate([[low_hz], freqs[inner], [high_hz]])
    vals = np.interp(grid, freqs, psd)
    return float(np.sum((vals[1:] + vals[:-1]) * np.diff(grid)) / 2.0)


def bandpower(x, fs: float, band: BandDefinition) -> float:
    if band.high_hz > fs / 2:
        raise InvalidBand(f"band {band.name} exceeds Nyquist ({fs / 2} Hz)")
    freqs, psd = welch_psd(x, fs)
    return integrate_psd(freqs, psd, band.low_hz, band.high_hz)


def spectral_entropy(x, fs: float, band=ENTROPY_RANGE) -> float:
    """Normalised Shannon entropy of the PSD bins inside ``band`` (0 for no power)."""
    x = np.asarray(x, dtype=float)
    if x.size < 64:
        raise ValidationError("spectral entropy needs at least 64 samples")
    freqs, psd = welch_psd(x, fs)
    sel = psd[(freqs >= band[0]) & (freqs <= band[1])]
    total = sel.sum()
    if sel.size < 2 or total <= 0:
        return 0.0
    p = sel[sel > 0] / total
    return float(-np.sum(p * np.log(p)) / np.log(sel.size))


def extract_dft_features(frame, bands=CANONICAL_BANDS) -> FeatureVector:
    """Per channel: one bandpower per band, then spectral entropy."""
    names, values, owners = [], [], []
    for ch, x in zip(frame.channel_labels, frame.samples):
        freqs, psd = welch_psd(x, frame.sample_rate)
        for b in bands:
            if b.high_hz > frame.sample_rate / 2:
                raise InvalidBand(f"band {b.name} exceeds Nyquist")
            names.append(f"{ch}_{b.name}_power")
            values.append(integrate_psd(freqs, psd, b.low_hz, b.high_hz))
            owners.append(ch)
        names.append(f"{ch}_spectral_entropy")
        values.append(spectral_entropy(x, frame.sample_rate))
        owners.append(ch)
    return FeatureVector(tuple(names), np.asarray(values), tuple(owners))


def extract_dwt_features(frame, subbands=SUBBANDS) -> FeatureVector:
    """Per channel: the six coefficient statistics for each requested subband."""
    names, values, owners = [], [], []
    for ch, x in zip(frame.channel_labels, frame.samples):
        feats = dwt_features(dwt_db4(x), subbands)
        names.extend(f"{ch}_{b}_{s}" for b in subbands for s in DWT_STATS)
        values.extend(feats)
        owners.extend([ch] * feats.size)
    return FeatureVector(tuple(names), np.asarray(values), tuple(owners))
