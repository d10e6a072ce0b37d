"""Synthetic two-state multichannel recordings for tests and demos.

Each trial runs Relax, Working, Relax for ``state_s`` seconds each. The
background is AR(1) noise scaled by a per-trial log-normal gain, so raw
power carries no class information. In the cue channels every state adds
an oscillation whose frequency wanders slowly around a state-specific
centre; Working optionally adds amplitude bursts.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .signal_model import (EMOTIV_CHANNELS, EMOTIV_REGIONS, ClassLabel, MultichannelRecording,
                           StateInterval, region_map_from_groups, save_recording)


@dataclass(frozen=True)
class SurrogateSpec:
    channels: tuple = EMOTIV_CHANNELS
    sample_rate: float = 128.0
    state_s: float = 60.0
    cue_channels: tuple | None = None  # None: every channel
    relax_hz: float = 20.0
    working_hz: float = 24.0
    drift_hz: float = 1.0
    tone_amplitude: float = 1.0
    burst_depth: float = 0.0  # 0 disables Working bursts
    burst_hz: float = 2.0
    noise_std: float = 1.0
    ar_coeff: float = 0.9
    gain_sigma: float = 0.5


def _ar1(rng, shape, coeff):
    e = rng.standard_normal(shape)
    out = np.empty(shape)
    out[..., 0] = e[..., 0] / np.sqrt(1 - coeff ** 2)
    for t in range(1, shape[-1]):
        out[..., t] = coeff * out[..., t - 1] + e[..., t]
    return out * np.sqrt(1 - coeff ** 2)


def _wandering_tone(rng, n, fs, centre, drift):
    """Unit sinusoid whose instantaneous frequency drifts within centre +- drift."""
    t = np.arange(n) / fs
    rate = rng.uniform(0.1, 0.3)
    inst = centre + drift * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(inst) / fs + rng.uniform(0, 2 * np.pi)
    return np.sin(phase)


def surrogate_recording(spec: SurrogateSpec, trial_id: str, seed) -> MultichannelRecording:
    rng = np.random.default_rng(seed)
    fs = spec.sample_rate
    n_state = int(round(spec.state_s * fs))
    n_ch = len(spec.channels)
    labels = (ClassLabel.RELAX, ClassLabel.WORKING, ClassLabel.RELAX)
    gain = np.exp(spec.gain_sigma * rng.standard_normal())
    x = spec.noise_std * _ar1(rng, (n_ch, 3 * n_state), spec.ar_coeff)
    cue = set(spec.channels if spec.cue_channels is None else spec.cue_channels)
    t = np.arange(n_state) / fs
    for k, lab in enumerate(labels):
        centre = spec.working_hz if lab is ClassLabel.WORKING else spec.relax_hz
        sl = slice(k * n_state, (k + 1) * n_state)
        for c, ch in enumerate(spec.channels):
            if ch not in cue:
                continue
            tone = spec.tone_amplitude * _wandering_tone(rng, n_state, fs, centre, spec.drift_hz)
            if lab is ClassLabel.WORKING and spec.burst_depth > 0:
                env = 1 + spec.burst_depth * np.sin(2 * np.pi * spec.burst_hz * t + rng.uniform(0, 2 * np.pi))
                tone = tone * np.maximum(env, 0) ** 2
            x[c, sl] += tone
    timeline = tuple(StateInterval(k * spec.state_s, (k + 1) * spec.state_s, lab)
                     for k, lab in enumerate(labels))
    regions = {ch: r for ch, r in region_map_from_groups(EMOTIV_REGIONS).items() if ch in spec.channels}
    subject, _, session = trial_id.partition("-")
    return MultichannelRecording(gain * x, fs, spec.channels, regions, timeline,
                                 trial_id, subject, session)


def surrogate_dataset(spec: SurrogateSpec, trials: int, seed: int = 0) -> list:
    """``trials`` recordings with ids ``sNN-kK`` (four sessions per subject)."""
    seeds = np.random.SeedSequence(seed).spawn(trials)
    return [surrogate_recording(spec, f"s{i // 4:02d}-k{i % 4}", ss) for i, ss in enumerate(seeds)]


def write_dataset(recordings, directory) -> list:
    """Write ``<trial_id>.csv`` plus ``<trial_id>.json`` for every recording."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in recordings:
        p = directory / f"{rec.trial_id}.csv"
        save_recording(rec, p)
        paths.append(p)
    return paths
