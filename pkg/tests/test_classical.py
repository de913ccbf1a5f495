import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freqest import classical
from freqest.linalg import NotHermitian, eigh
from freqest.signal import FreqRepresentation, GeneratorConfig, Grid, SinusoidMixture, generate_dataset, synthesize


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


@pytest.mark.parametrize("n", [1, 2, 3, 7, 25, 40])
def test_eigh_reconstructs_and_matches_numpy(rng, n):
    a = random_hermitian(rng, n)
    vals, vecs = eigh(a)
    assert np.all(np.diff(vals) <= 0)
    np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.conj().T, a, atol=1e-9 * max(1, np.abs(a).max()))
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-9)


def test_eigh_real_and_degenerate(rng):
    q, _ = np.linalg.qr(rng.normal(size=(6, 6)))
    a = q @ np.diag([3, 3, 1, 1, 1, 0]) @ q.T
    vals, vecs = eigh(a)
    np.testing.assert_allclose(vals, [3, 3, 1, 1, 1, 0], atol=1e-12)
    np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.conj().T, a, atol=1e-12)


def test_eigh_diagonal_and_rank_one():
    vals, _ = eigh(np.diag([1.0, 5.0, 2.0]))
    np.testing.assert_allclose(vals, [5, 2, 1])
    v = np.exp(2j * np.pi * 0.3 * np.arange(10))
    vals, vecs = eigh(np.outer(v, v.conj()))
    assert vals[0] == pytest.approx(10)
    assert np.max(np.abs(vals[1:])) < 1e-12


def test_eigh_rejects_non_hermitian(rng):
    with pytest.raises(NotHermitian):
        eigh(rng.normal(size=(4, 4)))
    with pytest.raises(ValueError):
        eigh(np.ones((2, 3)))


def test_periodogram_on_grid_tone():
    grid = Grid(1000)
    y = synthesize(SinusoidMixture([0.25], [1.0]), 50)
    p = classical.periodogram(y, grid)
    assert np.argmax(p.values) == 250
    assert p.values[250] == pytest.approx(50.0)


def test_periodogram_matches_dtft(rng):
    y = rng.normal(size=50) + 1j * rng.normal(size=50)
    grid = Grid(200)
    from freqest.signal import dtft

    # FFT index k corresponds to exp(-i2pi k n/G) with n from 0, the model starts at 1
    expected = np.abs(dtft(y, grid.points)) ** 2 / 50
    np.testing.assert_allclose(classical.periodogram(y, grid).values, expected, rtol=1e-9)
    small = classical.periodogram(y, Grid(20)).values
    np.testing.assert_allclose(small, np.abs(dtft(y, Grid(20).points)) ** 2 / 50, rtol=1e-9)


def test_covariance_structure(rng):
    y = rng.normal(size=50) + 1j * rng.normal(size=50)
    cov = classical.build_covariance(y, 25)
    assert cov.snapshots == 52
    np.testing.assert_allclose(cov.matrix, cov.matrix.conj().T, atol=1e-14)
    # forward-backward averaging makes R persymmetric: J conj(R) J = R
    np.testing.assert_allclose(cov.matrix[::-1, ::-1].conj(), cov.matrix, atol=1e-14)
    assert np.all(cov.eigenvalues >= -1e-12)
    with pytest.raises(ValueError):
        classical.build_covariance(y, 60)


def test_music_noise_free_peaks():
    freqs = np.array([0.1, 0.35, 0.36, 0.8])
    y = synthesize(SinusoidMixture(freqs, [1, 0.5, 0.7j, 0.2]), 50)
    cov = classical.build_covariance(y, 25)
    fr = classical.music_pseudospectrum(cov, 4, Grid(1000))
    peaks = classical.pick_peaks(fr, 4)
    np.testing.assert_allclose(np.sort(peaks.frequencies), freqs, atol=1e-3)
    with pytest.raises(ValueError):
        classical.music_pseudospectrum(cov, 25)


def _eigs_with_order(m, L=25, noise=0.01, gap=1.0):
    return np.concatenate([gap + np.arange(m, 0, -1), noise * np.ones(L - m)])


@pytest.mark.parametrize("m", [1, 3, 10])
def test_information_criteria_on_clean_spectra(m):
    lam = _eigs_with_order(m) * (1 + 1e-3 * np.arange(25)[::-1] / 25)
    assert classical.aic_order(lam, snapshots=52) == m
    assert classical.mdl_order(lam, snapshots=52) == m
    assert classical.sorte_order(lam) == m


def test_information_criterion_needs_snapshots():
    with pytest.raises(ValueError):
        classical.information_criterion(np.ones(5), "aic")


def test_mdl_penalizes_more_than_aic():
    lam = _eigs_with_order(3)
    aic = classical.information_criterion(lam, "aic", 52)
    mdl = classical.information_criterion(lam, "mdl", 52)
    assert np.all(mdl[1:] - aic[1:] > 0)


def test_sorte_edge_cases():
    flat = np.ones(10)
    assert np.all(np.isnan(classical.sorte_scores(flat)))
    assert classical.sorte_order(flat) == 1
    with pytest.raises(ValueError):
        classical.sorte_scores(np.ones(3))


def test_noise_free_order_selection_generated():
    recs = generate_dataset(GeneratorConfig(seed=21), 40, sigma=0.0)
    for r in recs:
        cov = classical.build_covariance(r.noisy, 25)
        for sel in classical.ORDER_SELECTORS.values():
            assert sel(cov) == r.truth.m


def test_local_maxima_circular_and_plateaus():
    v = np.array([3.0, 1, 2, 2, 1, 0, 5, 5, 5, 4])
    # index 0 is a maximum across the wrap only if it beats index 9
    assert list(classical.local_maxima(v)) == [2, 6]
    assert len(classical.local_maxima(np.ones(7))) == 0


def test_local_maxima_wrap():
    v = np.array([5.0, 1, 2, 1, 4])
    assert list(classical.local_maxima(v)) == [0, 2]


def _fr(values):
    return FreqRepresentation(np.asarray(values, float), Grid(len(values)))


def test_pick_peaks_order_and_padding():
    v = [0, 3, 0, 5, 0, 3, 0, 1]
    p = classical.pick_peaks(_fr(v), 3)
    assert list(p.indices) == [3, 1, 5] and not p.padded
    p = classical.pick_peaks(_fr(v), 6)
    assert p.padded and len(set(p.indices)) == 6
    assert list(p.indices[:4]) == [3, 1, 5, 7]
    assert np.allclose(p.frequencies, p.indices / 8)
    with pytest.raises(ValueError):
        classical.pick_peaks(_fr(v), 0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=60), st.integers(1, 5))
def test_pick_peaks_properties(values, k):
    v = np.asarray(values)
    p = classical.pick_peaks(_fr(v), min(k, len(v)))
    assert len(p.indices) == min(k, len(v))
    assert len(set(p.indices.tolist())) == len(p.indices)
    maxima = classical.local_maxima(v)
    for i in maxima:
        left, right = v[(i - 1) % len(v)], v[(i + 1) % len(v)]
        assert v[i] >= left and v[i] >= right
