import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freqest.signal import (
    GeneratorConfig,
    Grid,
    InfeasibleConfig,
    SinusoidMixture,
    apply_noise,
    dirichlet_kernel,
    dtft,
    generate_dataset,
    generate_record,
    ground_truth_batch,
    ground_truth_fr,
    sample_mixture,
    snr_db,
    synthesize,
    wrap_distance,
)
from freqest import rng as rngmod


def brute_dirichlet(f, N):
    k = np.arange(1, N + 1)
    return np.sum(np.exp(-2j * np.pi * k * f))


@given(st.floats(-3, 3, allow_nan=False), st.integers(1, 80))
def test_dirichlet_matches_direct_sum(f, N):
    assert abs(dirichlet_kernel(f, N) - brute_dirichlet(f, N)) < 1e-9 * N


def test_dirichlet_zeros_and_peak():
    N = 50
    assert dirichlet_kernel(0.0, N) == N
    assert dirichlet_kernel(3.0, N) == N
    ks = np.arange(1, N) / N
    assert np.max(np.abs(dirichlet_kernel(ks, N))) < 1e-12
    # main lobe ends at +-1/N, no zero inside it
    inner = np.linspace(-0.99 / N, 0.99 / N, 201)
    assert np.min(np.abs(dirichlet_kernel(inner, N))) > 0


@given(st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False))
def test_wrap_distance_properties(a, b):
    d = wrap_distance(a, b)
    assert 0 <= d <= 0.5
    assert d == pytest.approx(wrap_distance(b, a))
    assert wrap_distance(a, b + 1.0) == pytest.approx(d, abs=1e-12)
    assert wrap_distance(a, b, circular=False) == pytest.approx(abs(a - b))


def test_wrap_distance_examples():
    assert wrap_distance(0.05, 0.95) == pytest.approx(0.1)
    assert wrap_distance(0.05, 0.95, circular=False) == pytest.approx(0.9)


def test_synthesize_single_tone():
    mix = SinusoidMixture([0.25], [2.0])
    y = synthesize(mix, 4)
    np.testing.assert_allclose(y, 2 * np.array([1j, -1, -1j, 1]), atol=1e-12)


def test_dtft_equals_dirichlet_sum(rng):
    N = 50
    for _ in range(20):
        m = rng.integers(1, 6)
        mix = SinusoidMixture(rng.uniform(0, 1, m), rng.normal(size=m) + 1j * rng.normal(size=m))
        y = synthesize(mix, N)
        f = rng.uniform(-1, 2, 7)
        expected = np.array([np.sum(mix.amplitudes * dirichlet_kernel(u - mix.frequencies, N)) for u in f])
        np.testing.assert_allclose(dtft(y, f), expected, rtol=1e-9, atol=1e-9)


@given(st.floats(0, 1), st.integers(0, 2**32))
def test_noise_norm_ratio(sigma, seed):
    clean = synthesize(SinusoidMixture([0.1, 0.4], [1.0, 0.5j]), 50)
    noisy = apply_noise(clean, sigma, np.random.default_rng(seed))
    assert np.linalg.norm(noisy - clean) == pytest.approx(sigma * np.linalg.norm(clean), rel=1e-9, abs=1e-12)


def test_zero_sigma_is_exact_copy(rng):
    clean = synthesize(SinusoidMixture([0.3], [1.0]), 50)
    out = apply_noise(clean, 0.0, rng)
    assert np.array_equal(out, clean) and out is not clean


def test_real_noise_option(rng):
    clean = synthesize(SinusoidMixture([0.3], [1.0]), 50)
    noise = apply_noise(clean, 0.5, rng, complex_noise=False) - clean
    assert np.allclose(noise.imag, 0)


def test_noise_errors(rng):
    with pytest.raises(ValueError):
        apply_noise(np.zeros(5, complex), 0.1, rng)
    with pytest.raises(ValueError):
        apply_noise(np.ones(5, complex), -0.1, rng)


def test_snr_db():
    assert snr_db(0) == math.inf
    assert snr_db(1.0) == 0.0
    assert snr_db(0.1) == pytest.approx(20.0)


def _min_sep(freqs, circular=True):
    if len(freqs) < 2:
        return np.inf
    d = wrap_distance(freqs[:, None], freqs[None, :], circular)
    return d[~np.eye(len(freqs), dtype=bool)].min()


@given(st.integers(0, 10_000), st.booleans())
def test_generator_respects_separation(seed, circular):
    cfg = GeneratorConfig(seed=seed, circular=circular)
    mix = sample_mixture(cfg, rngmod.stream(seed, 99))
    assert 1 <= mix.m <= cfg.m_max
    assert np.all((mix.frequencies >= 0) & (mix.frequencies < 1))
    assert np.all(np.diff(mix.frequencies) >= 0)
    assert _min_sep(mix.frequencies, circular) >= cfg.sep_floor - 1e-12
    assert np.all(np.abs(mix.amplitudes) >= cfg.amp_floor)


def test_generator_counts_cover_range():
    records = generate_dataset(GeneratorConfig(m_max=4, seed=3), 400)
    counts = np.bincount([r.truth.m for r in records], minlength=5)
    assert counts[0] == 0 and np.all(counts[1:] > 60)


def test_dataset_deterministic_and_thread_invariant():
    cfg = GeneratorConfig(seed=11)
    a = generate_dataset(cfg, 30)
    b = generate_dataset(cfg, 30, threads=4)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.noisy, rb.noisy)
        assert np.array_equal(ra.truth.frequencies, rb.truth.frequencies)
    assert np.array_equal(generate_record(cfg, 17).noisy, a[17].noisy)


def test_sigma_override_and_range():
    cfg = GeneratorConfig(seed=5, sigma_range=(0.2, 0.3))
    recs = generate_dataset(cfg, 50)
    assert all(0.2 <= r.sigma <= 0.3 for r in recs)
    fixed = generate_dataset(cfg, 5, sigma=0.0)
    assert all(np.array_equal(r.noisy, r.clean) for r in fixed)


def test_infeasible_separation():
    with pytest.raises(InfeasibleConfig):
        sample_mixture(GeneratorConfig(m_max=10, sep_floor=0.2, max_retries=20), _ten_components_rng())


def _ten_components_rng():
    # find a stream whose first draw gives m = 10
    for k in range(1000):
        g = rngmod.stream(0, 77, k)
        if int(g.integers(1, 11)) == 10:
            return rngmod.stream(0, 77, k)
    raise AssertionError


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(sigma_range=(0.5, 0.1))
    with pytest.raises(ValueError):
        GeneratorConfig(m_max=0)
    assert GeneratorConfig().sep_floor == pytest.approx(1 / 50)


def test_ground_truth_peaks():
    grid = Grid(1000)
    mix = SinusoidMixture([0.1, 0.5], [1, 1])
    fr = ground_truth_fr(mix, grid, 0.3 / 50)
    assert fr.values[100] == pytest.approx(1.0, abs=1e-12)
    assert fr.values[500] == pytest.approx(1.0, abs=1e-12)
    assert fr.values[300] < 1e-12
    wrapped = ground_truth_fr(SinusoidMixture([0.0], [1]), grid, 0.3 / 50)
    assert wrapped.values[999] == pytest.approx(wrapped.values[1])
    batch = ground_truth_batch([mix.frequencies], grid, 0.3 / 50)
    np.testing.assert_array_equal(batch[0], fr.values)


def test_mixture_validation_and_add():
    with pytest.raises(ValueError):
        SinusoidMixture([0.1, 0.2], [1.0])
    both = SinusoidMixture([0.1], [1]) + SinusoidMixture([0.2], [2])
    assert both.m == 2
