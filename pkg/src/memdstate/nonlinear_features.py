"""Nonlinear features computed per IMF.

Population statistics throughout (``ddof=0``). Degenerate inputs such as
flat IMFs, which zero-padding produces routinely, map to 0 rather than
raising, so batch extraction never aborts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .memd import ImfStack

EPS = 1e-12

IMF_FEATURES = (
    "activity", "mobility", "complexity", "std_dev", "coeff_variation",
    "higuchi_fd", "skewness", "kurtosis", "shannon_entropy",
    "log_energy_entropy", "normalized_energy",
)
PAIR_FEATURE = "fluctuation_index"

# High-ranked set reported for the original EEG data.
DEFAULT_SELECTED_FEATURES = (
    "activity", "mobility", "complexity", "std_dev", "fluctuation_index",
    "normalized_energy", "higuchi_fd", "kurtosis",
)


def _flat(x: np.ndarray) -> bool:
    return x.size == 0 or np.ptp(x) == 0


def hjorth(x) -> tuple[float, float, float]:
    """Hjorth activity, mobility and complexity."""
    x = np.asarray(x, dtype=float)
    if _flat(x):
        return 0.0, 0.0, 0.0
    dx = np.diff(x)
    var_x = np.var(x)
    var_d = np.var(dx)
    mobility = np.sqrt(var_d / var_x) if var_x > 0 else 0.0
    if var_d > 0:
        mob_d = np.sqrt(np.var(np.diff(dx)) / var_d)
        complexity = mob_d / mobility if mobility > 0 else 0.0
    else:
        complexity = 0.0
    return float(var_x), float(mobility), float(complexity)


def coeff_variation(x) -> float:
    x = np.asarray(x, dtype=float)
    std = np.std(x)
    mean = abs(np.mean(x))
    return float(std / mean) if mean > EPS else float(std / EPS)


def fluctuation_index(x) -> float:
    """Mean absolute first difference of one series."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(x))))


def fluctuation_change(a, b) -> float:
    """Pair feature for consecutive IMFs: |F(a) - F(b)| with F the fluctuation index."""
    return abs(fluctuation_index(a) - fluctuation_index(b))


def higuchi_curve_lengths(x, k_max: int = 10) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.size
    lengths = np.empty(k_max)
    for k in range(1, k_max + 1):
        lm = []
        for m in range(k):
            seq = x[m::k]
            count = seq.size - 1
            if count < 1:
                continue
            norm = (n - 1) / (count * k)
            lm.append(np.sum(np.abs(np.diff(seq))) * norm / k)
        lengths[k - 1] = np.mean(lm)
    return lengths


def higuchi_fd(x, k_max: int = 10) -> float:
    """Higuchi fractal dimension (slope of ln L(k) against ln 1/k)."""
    x = np.asarray(x, dtype=float)
    if x.size < 10 * k_max:
        raise ValidationError(f"series of length {x.size} too short for k_max={k_max}")
    if _flat(x):
        return 0.0
    lengths = higuchi_curve_lengths(x, k_max)
    k = np.arange(1, k_max + 1)
    slope = np.polyfit(np.log(1.0 / k), np.log(lengths), 1)[0]
    return float(slope)


def moments(x) -> tuple[float, float]:
    """Skewness and (non-excess) kurtosis; both 0 for a flat series."""
    x = np.asarray(x, dtype=float)
    if _flat(x):
        return 0.0, 0.0
    c = x - x.mean()
    m2 = np.mean(c ** 2)
    if m2 <= 0:
        return 0.0, 0.0
    return float(np.mean(c ** 3) / m2 ** 1.5), float(np.mean(c ** 4) / m2 ** 2)


def shannon_entropy(x, bins: int = 16) -> float:
    """Entropy (nats) of the equal-width amplitude histogram over [min, max]."""
    x = np.asarray(x, dtype=float)
    if _flat(x):
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(x.min(), x.max()))
    p = counts[counts > 0] / x.size
    return float(-np.sum(p * np.log(p)))


def log_energy_entropy(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.log(x * x + EPS)))


def imf_features(x, normalized_energy: float, k_max: int = 10, bins: int = 16) -> np.ndarray:
    """The per-IMF feature row in ``IMF_FEATURES`` order."""
    activity, mobility, complexity = hjorth(x)
    skew, kurt = moments(x)
    return np.array([
        activity, mobility, complexity, float(np.std(x)), coeff_variation(x),
        higuchi_fd(x, k_max), skew, kurt, shannon_entropy(x, bins),
        log_energy_entropy(x), normalized_energy,
    ])


@dataclass(frozen=True)
class FeatureVector:
    """Named feature values for one frame; ``channels[i]`` owns column ``i``."""

    names: tuple
    values: np.ndarray
    channels: tuple

    def __len__(self) -> int:
        return len(self.names)

    def subset(self, mask) -> "FeatureVector":
        idx = np.flatnonzero(mask)
        return FeatureVector(tuple(self.names[i] for i in idx), self.values[idx],
                             tuple(self.channels[i] for i in idx))

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        return FeatureVector(self.names + other.names,
                             np.concatenate([self.values, other.values]),
                             self.channels + other.channels)


@dataclass(frozen=True)
class ImfFeatureSet:
    per_imf: np.ndarray  # (channels, selected, len(IMF_FEATURES))
    pairs: np.ndarray  # (channels, selected - 1)
    imf_indices: tuple  # 1-based
    channel_labels: tuple

    def value(self, channel: str, imf: int, feature: str) -> float:
        c = self.channel_labels.index(channel)
        j = self.imf_indices.index(imf)
        return float(self.per_imf[c, j, IMF_FEATURES.index(feature)])

    def to_vector(self) -> FeatureVector:
        """Flatten channel-major: each channel's IMF blocks, then its pair features."""
        names, values, owners = [], [], []
        for c, ch in enumerate(self.channel_labels):
            for j, imf in enumerate(self.imf_indices):
                for f, feat in enumerate(IMF_FEATURES):
                    names.append(f"{ch}_imf{imf}_{feat}")
                    values.append(self.per_imf[c, j, f])
                    owners.append(ch)
            for p in range(len(self.imf_indices) - 1):
                a, b = self.imf_indices[p], self.imf_indices[p + 1]
                names.append(f"{ch}_imf{a}-{b}_{PAIR_FEATURE}")
                values.append(self.pairs[c, p])
                owners.append(ch)
        return FeatureVector(tuple(names), np.asarray(values, dtype=float), tuple(owners))


def extract_memd_features(stack: ImfStack, selected, channel_labels=None,
                          k_max: int = 10, bins: int = 16) -> ImfFeatureSet:
    """Features for every (channel, selected IMF); ``selected`` is 1-based."""
    selected = tuple(int(i) for i in selected)
    if not selected:
        raise ValidationError("empty IMF selection")
    bad = [i for i in selected if not 1 <= i <= stack.n_imfs]
    if bad:
        raise ValidationError(f"IMF indices {bad} outside 1..{stack.n_imfs}")
    n_ch = stack.n_channels
    labels = tuple(channel_labels) if channel_labels is not None else tuple(
        f"ch{i}" for i in range(n_ch))
    imfs = stack.imfs[[i - 1 for i in selected]]  # (S, channels, T)
    energy = np.sum(imfs ** 2, axis=2)  # (S, channels)
    total = energy.sum(axis=0)
    per_imf = np.empty((n_ch, len(selected), len(IMF_FEATURES)))
    pairs = np.empty((n_ch, len(selected) - 1))
    for c in range(n_ch):
        for j in range(len(selected)):
            ne = energy[j, c] / total[c] if total[c] > 0 else 0.0
            per_imf[c, j] = imf_features(imfs[j, c], ne, k_max, bins)
        for p in range(len(selected) - 1):
            pairs[c, p] = fluctuation_change(imfs[p, c], imfs[p + 1, c])
    return ImfFeatureSet(per_imf, pairs, selected, labels)
