import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from conftest import mean_frequency, tone_fractions
from memdstate._kernels import maxima_indices
from memdstate.errors import InsufficientExtrema, ValidationError
from memdstate.memd import (DirectionSet, ImfStack, SiftConfig, decompose, envelope_mean,
                            find_maxima, generate_directions, local_mean, natural_spline,
                            nearest_angles, project, sift)

FS = 128.0


def two_tone(n_ch, length=1920, noise=0.0, seed=0):
    t = np.arange(length) / FS
    x = np.sin(2 * np.pi * 25 * t) + np.sin(2 * np.pi * 3 * t)
    out = np.tile(x, (n_ch, 1))
    if noise:
        out = out + noise * np.random.default_rng(seed).standard_normal(out.shape)
    return out


# directions

def test_directions_unit_norm_small():
    d = generate_directions(2, 4)
    assert d.vectors.shape == (4, 2)
    np.testing.assert_allclose(np.linalg.norm(d.vectors, axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("n,V", [(3, 64), (14, 64), (14, 128), (20, 80)])
def test_directions_norms_and_distinct(n, V):
    d = generate_directions(n, V)
    np.testing.assert_allclose(np.linalg.norm(d.vectors, axis=1), 1.0, atol=1e-12)
    assert np.unique(np.round(d.vectors, 12), axis=0).shape[0] == V


def test_directions_fewer_than_channels_rejected():
    with pytest.raises(ValidationError):
        generate_directions(14, 13)


def test_directions_deterministic():
    np.testing.assert_array_equal(generate_directions(5, 40).vectors,
                                  generate_directions(5, 40).vectors)


def test_directions_uniformity_against_random_draws():
    def spread(v):
        a = nearest_angles(v)
        return a.max() / a.min()

    ours = spread(generate_directions(14, 128).vectors)
    rng = np.random.default_rng(0)
    best = np.inf
    for _ in range(100):
        g = rng.standard_normal((128, 14))
        best = min(best, spread(g / np.linalg.norm(g, axis=1, keepdims=True)))
    assert ours < 3 * best


# projection and maxima

def test_project_basis_and_orthogonal(rng):
    s = rng.standard_normal(100)
    x = np.vstack([s, np.zeros(100), np.zeros(100)])
    np.testing.assert_array_equal(project(x, np.array([1.0, 0, 0])), s)
    const = np.vstack([np.ones(50), np.ones(50)])
    np.testing.assert_allclose(project(const, np.array([1, -1]) / np.sqrt(2)), 0.0, atol=1e-15)


def test_project_matches_loop(rng):
    x = rng.standard_normal((5, 64))
    d = rng.standard_normal(5)
    naive = [sum(d[c] * x[c, t] for c in range(5)) for t in range(64)]
    np.testing.assert_allclose(project(x, d), naive, rtol=1e-13, atol=1e-13)
    with pytest.raises(ValidationError):
        project(x, d[:4])


def test_find_maxima_cases():
    assert find_maxima(np.arange(20.0)).size == 0
    np.testing.assert_array_equal(find_maxima(np.array([0, 1, 1, 0.0])), [1])
    n = 256
    p = np.sin(2 * np.pi * 4 * np.arange(n) / n)
    idx = find_maxima(p)
    expected = np.array([16, 80, 144, 208])
    assert idx.size == 4
    assert np.all(np.abs(idx - expected) <= 1)


def test_kernel_maxima_match_reference(rng):
    for _ in range(50):
        p = rng.integers(0, 4, size=rng.integers(3, 60)).astype(float)
        np.testing.assert_array_equal(maxima_indices(p), find_maxima(p))


# splines and envelopes

def test_natural_spline_matches_scipy(rng):
    knots = np.cumsum(rng.uniform(0.5, 3.0, 12))
    vals = rng.standard_normal((12, 3))
    t = np.linspace(knots[0], knots[-1], 200)
    ref = CubicSpline(knots, vals, bc_type="natural")(t)
    np.testing.assert_allclose(natural_spline(knots, vals, t), ref, atol=1e-12)


def test_local_mean_of_injected_envelopes():
    m = local_mean([np.ones((2, 10)), 3 * np.ones((2, 10))])
    np.testing.assert_array_equal(m, 2.0)


def test_envelope_mean_identical_channels(rng):
    s = rng.standard_normal(300)
    x = np.vstack([s, s, s])
    m = envelope_mean(x, generate_directions(3, 64))
    np.testing.assert_allclose(m[0], m[1], atol=1e-12)
    np.testing.assert_allclose(m[0], m[2], atol=1e-12)


def _oracle_envelope_mean(x, vectors, min_extrema=3):
    """Straight-line reimplementation: loops, scipy splines, explicit mirroring."""
    n_ch, length = x.shape
    envs = []
    for v in vectors:
        p = [sum(v[c] * x[c, t] for c in range(n_ch)) for t in range(length)]
        peaks = []
        i = 1
        while i < length - 1:
            if p[i] > p[i - 1]:
                j = i
                while j + 1 < length and p[j + 1] == p[i]:
                    j += 1
                if j + 1 < length and p[j + 1] < p[i]:
                    peaks.append((i + j) // 2)
                i = j + 1
            else:
                i += 1
        if len(peaks) < min_extrema:
            continue
        left = [peaks[1], peaks[0]]
        right = [peaks[-1], peaks[-2]]
        times = [-left[0], -left[1]] + peaks + [2 * (length - 1) - r for r in right]
        src = left + peaks + right
        spline = CubicSpline(times, x[:, src].T, bc_type="natural")
        envs.append(spline(np.arange(length)).T)
    return sum(envs) / len(envs)


def test_envelope_mean_matches_oracle():
    t = np.arange(400) / FS
    a = np.sin(2 * np.pi * 25 * t) + np.sin(2 * np.pi * 3 * t)
    b = 0.5 * np.sin(2 * np.pi * 25 * t + 0.3) + 1.2 * np.sin(2 * np.pi * 3 * t)
    x = np.vstack([a, b])
    dirs = generate_directions(2, 64)
    np.testing.assert_allclose(envelope_mean(x, dirs), _oracle_envelope_mean(x, dirs.vectors),
                               atol=1e-9)


def test_envelope_mean_dimension_mismatch(rng):
    with pytest.raises(ValidationError):
        envelope_mean(rng.standard_normal((3, 100)), generate_directions(2, 8))


# sifting

def test_sift_pure_sinusoid_is_one_imf():
    t = np.arange(1920) / FS
    x = np.tile(np.sin(2 * np.pi * 10 * t), (3, 1))
    imf, rem = sift(x, generate_directions(3, 64), SiftConfig())
    assert np.sqrt(np.mean(rem ** 2)) < 0.02 * np.sqrt(np.mean(x ** 2))


def test_sift_identity(rng):
    x = rng.standard_normal((4, 500))
    imf, rem = sift(x, generate_directions(4, 64), SiftConfig())
    assert np.max(np.abs(imf + rem - x)) <= 1e-12 * np.max(np.abs(x))


def test_sift_zero_signal_raises():
    with pytest.raises(InsufficientExtrema):
        sift(np.zeros((2, 200)), generate_directions(2, 16), SiftConfig())


# decomposition

def test_decompose_reconstruction_and_alignment(rng):
    x = rng.standard_normal((14, 1920))
    st = decompose(x)
    assert st.imfs.shape == (10, 14, 1920)
    err = np.max(np.abs(st.reconstruct() - x)) / np.max(np.abs(x))
    assert err <= 1e-10


def test_decompose_without_padding_and_residue_rule(rng):
    x = np.cumsum(rng.standard_normal((3, 600)), axis=1)
    cfg = SiftConfig(max_imfs=30, pad_to_max=False)
    st = decompose(x, cfg)
    assert st.n_imfs == st.n_extracted < 30
    dirs = generate_directions(3, cfg.directions_for(3))
    for v in dirs.vectors:
        assert find_maxima(v @ st.residue).size < cfg.min_extrema


def test_decompose_short_input_rejected():
    with pytest.raises(ValidationError):
        decompose(np.zeros((2, 10)))
    with pytest.raises(ValidationError):
        decompose(np.full((2, 100), np.nan))


def test_decompose_deterministic(rng):
    x = rng.standard_normal((4, 700))
    a, b = decompose(x), decompose(x)
    np.testing.assert_array_equal(a.imfs, b.imfs)
    np.testing.assert_array_equal(a.residue, b.residue)


@pytest.mark.parametrize("scale", [2.0, 0.5, 3.0])
def test_decompose_positive_homogeneity(rng, scale):
    x = rng.standard_normal((3, 600))
    a, b = decompose(x), decompose(scale * x)
    np.testing.assert_allclose(b.imfs, scale * a.imfs, rtol=1e-9, atol=1e-9 * np.abs(x).max() * scale)


def test_two_tone_noise_free_separates_into_first_two_imfs():
    # Without noise the 3 Hz tone is the second mode, not a later one.
    st = decompose(two_tone(2, noise=0.0))
    for c in range(2):
        assert tone_fractions(st, 25, FS, c)[0] >= 0.8
        assert tone_fractions(st, 3, FS, c)[1] >= 0.8


def test_two_tone_noisy_ranges():
    st = decompose(two_tone(2, noise=0.1, seed=3))
    for c in range(2):
        assert tone_fractions(st, 25, FS, c)[:2].sum() >= 0.8
        assert tone_fractions(st, 3, FS, c)[2:].sum() >= 0.8


def test_mean_frequency_quasi_monotone():
    st = decompose(two_tone(2, noise=0.1, seed=4))
    freqs = [mean_frequency(st.imfs[j, 0], FS) for j in range(st.n_extracted)]
    violations = sum(b > a for a, b in zip(freqs, freqs[1:]))
    assert violations <= 1


def test_imf_stack_roundtrip(tmp_path, rng):
    st = decompose(rng.standard_normal((3, 300)), SiftConfig(max_imfs=4))
    st.save(tmp_path / "stack", ["A", "B", "C"])
    assert (tmp_path / "stack" / "imf_01.csv").read_text().splitlines()[0] == "A,B,C"
    back = ImfStack.load(tmp_path / "stack")
    np.testing.assert_array_equal(back.imfs, st.imfs)
    np.testing.assert_array_equal(back.residue, st.residue)
    assert back.config == st.config
    assert back.n_extracted == st.n_extracted


def test_sift_config_validation():
    with pytest.raises(ValidationError):
        SiftConfig(max_imfs=0)
    with pytest.raises(ValidationError):
        SiftConfig(stoppage_tolerance=0)
    assert SiftConfig().directions_for(14) == 64
    assert isinstance(generate_directions(1, 4), DirectionSet)
