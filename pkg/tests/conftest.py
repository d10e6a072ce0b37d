import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tone_fractions(stack, freq_hz, fs, channel):
    """Share of a tone's FFT-bin energy held by each IMF (last entry: residue)."""
    parts = list(stack.imfs[:, channel]) + [stack.residue[channel]]
    n = stack.residue.shape[1]
    k = int(round(freq_hz * n / fs))
    energy = np.array([abs(np.fft.rfft(p)[k]) ** 2 for p in parts])
    return energy / energy.sum()


def mean_frequency(component, fs):
    spec = np.abs(np.fft.rfft(component)) ** 2
    freqs = np.fft.rfftfreq(component.size, 1 / fs)
    return float(np.sum(freqs * spec) / np.sum(spec))
