"""Multivariate empirical mode decomposition.

All channels are sifted jointly: the signal is projected onto a set of
directions on the unit hypersphere, the maxima of each projection pick the
time instants at which the full multichannel signal is interpolated, and the
average of those envelopes is the local mean removed at each sifting step.
Every channel therefore ends up with the same number of scale-aligned IMFs.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import betaincinv

from ._kernels import envelope_stats
from .errors import InsufficientExtrema, ValidationError

MIN_LENGTH = 16


@dataclass(frozen=True)
class DirectionSet:
    vectors: np.ndarray  # (V, n), unit rows

    @property
    def n(self) -> int:
        return self.vectors.shape[1]

    @property
    def V(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class SiftConfig:
    """Controls for the decomposition.

    ``num_directions=None`` picks 64 directions for up to 16 channels and
    four per channel above that.
    """

    max_imfs: int = 10
    num_directions: int | None = None
    max_sift_iters: int = 15
    stoppage_tolerance: float = 0.075
    outlier_fraction: float = 0.05
    min_extrema: int = 3
    pad_to_max: bool = True

    def __post_init__(self):
        if self.max_imfs < 1:
            raise ValidationError("max_imfs must be >= 1")
        if self.stoppage_tolerance <= 0:
            raise ValidationError("stoppage_tolerance must be > 0")
        if self.max_sift_iters < 1:
            raise ValidationError("max_sift_iters must be >= 1")
        if self.min_extrema < 1:
            raise ValidationError("min_extrema must be >= 1")
        if not 0 <= self.outlier_fraction < 1:
            raise ValidationError("outlier_fraction must be in [0, 1)")

    def directions_for(self, n: int) -> int:
        if self.num_directions is not None:
            return self.num_directions
        return 64 if n <= 16 else 4 * n

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ImfStack:
    """IMFs of one decomposition.

    ``imfs`` has shape (M, channels, T); ``n_extracted`` counts the IMFs
    that came out of sifting, the rest (if any) are zero padding.
    """

    imfs: np.ndarray
    residue: np.ndarray
    config: SiftConfig
    n_extracted: int = field(default=-1)

    def __post_init__(self):
        if self.n_extracted < 0:
            self.n_extracted = self.imfs.shape[0]

    @property
    def n_imfs(self) -> int:
        return self.imfs.shape[0]

    @property
    def n_channels(self) -> int:
        return self.residue.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residue

    def save(self, directory, channel_labels=None) -> None:
        """Write one CSV per IMF (channels as columns) plus ``metadata.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        labels = list(channel_labels) if channel_labels is not None else [
            f"ch{i}" for i in range(self.n_channels)]
        header = ",".join(labels)
        width = max(2, len(str(self.n_imfs)))
        for j, imf in enumerate(self.imfs, start=1):
            np.savetxt(directory / f"imf_{j:0{width}d}.csv", imf.T, delimiter=",",
                       header=header, comments="", fmt="%.17g")
        np.savetxt(directory / "residue.csv", self.residue.T, delimiter=",",
                   header=header, comments="", fmt="%.17g")
        meta = {"n_imfs": self.n_imfs, "n_extracted": self.n_extracted,
                "channels": labels, "config": self.config.to_dict()}
        (directory / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "ImfStack":
        directory = Path(directory)
        meta = json.loads((directory / "metadata.json").read_text())
        width = max(2, len(str(meta["n_imfs"])))

        def read(name):
            return np.atleast_2d(np.loadtxt(directory / name, delimiter=",", skiprows=1, ndmin=2)).T

        imfs = np.stack([read(f"imf_{j:0{width}d}.csv") for j in range(1, meta["n_imfs"] + 1)])
        return cls(imfs=imfs, residue=read("residue.csv"),
                   config=SiftConfig(**meta["config"]), n_extracted=meta["n_extracted"])


def _primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    out = np.zeros(indices.shape, dtype=float)
    scale = 1.0 / base
    idx = indices.copy()
    while np.any(idx > 0):
        out += (idx % base) * scale
        idx //= base
        scale /= base
    return out


def hammersley(n_points: int, dim: int) -> np.ndarray:
    """Hammersley point set in the open unit cube, shape (n_points, dim)."""
    i = np.arange(n_points)
    cols = [(i + 0.5) / n_points]
    for base in _primes(dim - 1):
        cols.append(_radical_inverse(i + 1, base))
    return np.column_stack(cols)


def _hemisphere_points(n: int, count: int) -> np.ndarray:
    """Equal-area map of a Hammersley set onto the half sphere with azimuth in [0, pi)."""
    u = hammersley(count, n - 1)
    polar = []
    for k in range(1, n - 1):
        a = (n - k) / 2.0  # sin^(n-1-k) density -> Beta(a, a) on (1 - cos)/2
        polar.append(np.arccos(np.clip(1.0 - 2.0 * betaincinv(a, a, u[:, k]), -1.0, 1.0)))
    azimuth = np.pi * u[:, 0]
    vecs = np.empty((count, n))
    scale = np.ones(count)
    for k, phi in enumerate(polar):
        vecs[:, k] = scale * np.cos(phi)
        scale = scale * np.sin(phi)
    vecs[:, n - 2] = scale * np.cos(azimuth)
    vecs[:, n - 1] = scale * np.sin(azimuth)
    return vecs


def generate_directions(n: int, V: int) -> DirectionSet:
    """Deterministic, near-uniform unit vectors on the sphere in R^n.

    ceil(V/2) Hammersley points are mapped onto a half sphere through the
    equal-area hyperspherical parametrisation (polar angles via the inverse
    CDF of their sin^m densities), then completed with their antipodes.
    Antipodal pairs make the maxima of the projection on -v the minima on v,
    so averaging maxima-only envelopes does not drift toward either side.
    """
    if n < 1:
        raise ValidationError("channel count must be >= 1")
    if V < n:
        raise ValidationError(f"need at least as many directions as channels ({V} < {n})")
    half = (V + 1) // 2
    if n == 1:
        base = np.ones((half, 1))
    else:
        base = _hemisphere_points(n, half)
    vecs = np.empty((V, n))
    vecs[0::2] = base
    vecs[1::2] = -base[:V // 2]
    return DirectionSet(vecs)


def project(x: np.ndarray, direction: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if direction.ndim != 1 or direction.shape[0] != x.shape[0]:
        raise ValidationError(
            f"direction has dimension {direction.shape}, signal has {x.shape[0]} channels")
    return direction @ x


def find_maxima(p: np.ndarray) -> np.ndarray:
    """Interior local maxima; a flat-topped peak reports its midpoint (floor)."""
    p = np.asarray(p, dtype=float)
    if p.size < 3:
        return np.empty(0, dtype=int)
    change = np.flatnonzero(np.diff(p) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [p.size - 1]))
    v = p[starts]
    if v.size < 3:
        return np.empty(0, dtype=int)
    peak = (v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])
    k = np.flatnonzero(peak) + 1
    return (starts[k] + ends[k]) // 2


def _mirror_knots(idx: np.ndarray, length: int):
    """Knot times and source indices, with the two nearest maxima reflected beyond each end."""
    last = length - 1
    left = -idx[:2][::-1]
    right = 2 * last - idx[-2:][::-1]
    return np.concatenate((left, idx, right)), np.concatenate((idx[:2][::-1], idx, idx[-2:][::-1]))


def natural_spline(knots: np.ndarray, values: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate the natural cubic spline through ``(knots, values)`` at ``t``.

    ``values`` is (K, channels); knots must be strictly increasing, K >= 3.
    """
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    h = np.diff(knots)
    slope = np.diff(values, axis=0) / h[:, None]
    k = knots.size
    second = np.zeros_like(values)
    if k > 2:
        ab = np.zeros((3, k - 2))
        ab[0, 1:] = h[1:-1]
        ab[1] = 2.0 * (h[:-1] + h[1:])
        ab[2, :-1] = h[1:-1]
        second[1:-1] = solve_banded((1, 1), ab, 6.0 * np.diff(slope, axis=0))
    j = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, k - 2)
    hj = h[j][:, None]
    a = ((knots[j + 1] - t)[:, None]) / hj
    b = 1.0 - a
    return (a * values[j] + b * values[j + 1]
            + ((a ** 3 - a) * second[j] + (b ** 3 - b) * second[j + 1]) * (hj * hj / 6.0))


def direction_envelope(x: np.ndarray, direction: np.ndarray, min_extrema: int = 3) -> np.ndarray:
    """Natural-spline envelope through x at the maxima of its projection."""
    p = direction @ x
    idx = find_maxima(p)
    if idx.size < min_extrema:
        raise InsufficientExtrema(f"projection has {idx.size} maxima, need {min_extrema}")
    knots, src = _mirror_knots(idx, x.shape[1])
    return natural_spline(knots, x[:, src].T, np.arange(x.shape[1], dtype=float)).T


def local_mean(envelopes) -> np.ndarray:
    """Average of per-direction envelopes, summed in direction order."""
    total = None
    count = 0
    for env in envelopes:
        total = np.array(env, dtype=float) if total is None else total + env
        count += 1
    if count == 0:
        raise ValueError("no envelopes")
    return total / count


def _mean_and_amplitude(x, dirs: DirectionSet, min_extrema):
    x = np.ascontiguousarray(x, dtype=float)
    mean, amp, used = envelope_stats(x, np.ascontiguousarray(dirs.vectors), min_extrema)
    if used == 0:
        raise InsufficientExtrema(f"no projection has {min_extrema} or more maxima")
    return mean, amp


def envelope_mean(x: np.ndarray, dirs: DirectionSet, min_extrema: int = 3) -> np.ndarray:
    """Local mean of the multivariate envelopes over all directions.

    Directions whose projection has fewer than ``min_extrema`` maxima are
    skipped; InsufficientExtrema is raised when none has enough.
    """
    x = np.asarray(x, dtype=float)
    if dirs.n != x.shape[0]:
        raise ValidationError("direction dimension does not match channel count")
    return _mean_and_amplitude(x, dirs, min_extrema)[0]


def _should_stop(mean, amp, cfg: SiftConfig) -> bool:
    mnorm = np.linalg.norm(mean, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(amp > 0, mnorm / np.where(amp > 0, amp, 1.0),
                         np.where(mnorm > 0, np.inf, 0.0))
    return np.mean(ratio > cfg.stoppage_tolerance) <= cfg.outlier_fraction


def sift(x: np.ndarray, dirs: DirectionSet, cfg: SiftConfig) -> tuple[np.ndarray, np.ndarray]:
    """Extract one IMF; returns ``(imf, x - imf)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite samples")
    d = x.copy()
    for it in range(cfg.max_sift_iters):
        try:
            mean, amp = _mean_and_amplitude(d, dirs, cfg.min_extrema)
        except InsufficientExtrema:
            if it == 0:
                raise
            break
        if _should_stop(mean, amp, cfg):
            break
        d = d - mean
    return d, x - d


def _is_residue(r: np.ndarray, dirs: DirectionSet, min_extrema: int) -> bool:
    projections = dirs.vectors @ r
    return all(find_maxima(p).size < min_extrema for p in projections)


def decompose(x: np.ndarray, cfg: SiftConfig | None = None) -> ImfStack:
    """Decompose a (channels, T) block into scale-aligned IMFs plus residue."""
    cfg = cfg or SiftConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] < MIN_LENGTH:
        raise ValidationError(f"signal has {x.shape[1]} samples, need >= {MIN_LENGTH}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite samples")
    n = x.shape[0]
    dirs = generate_directions(n, cfg.directions_for(n))

    residue = x.copy()
    imfs = []
    while len(imfs) < cfg.max_imfs and not _is_residue(residue, dirs, cfg.min_extrema):
        try:
            imf, _ = sift(residue, dirs, cfg)
        except InsufficientExtrema:
            break
        imfs.append(imf)
        residue = residue - imf

    n_extracted = len(imfs)
    if cfg.pad_to_max:
        imfs.extend(np.zeros_like(x) for _ in range(cfg.max_imfs - n_extracted))
    stack = np.stack(imfs) if imfs else np.zeros((0,) + x.shape)
    return ImfStack(imfs=stack, residue=residue, config=cfg, n_extracted=n_extracted)


def nearest_angles(vectors: np.ndarray) -> np.ndarray:
    """Angle from each unit vector to its nearest neighbour in the set."""
    cos = np.clip(vectors @ vectors.T, -1.0, 1.0)
    np.fill_diagonal(cos, -np.inf)
    return np.arccos(np.clip(cos.max(axis=1), -1.0, 1.0))


__all__ = [
    "DirectionSet", "SiftConfig", "ImfStack", "hammersley", "generate_directions",
    "project", "find_maxima", "natural_spline", "direction_envelope", "local_mean", "envelope_mean",
    "sift", "decompose", "nearest_angles", "MIN_LENGTH",
]
