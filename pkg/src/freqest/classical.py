"""Model-based baselines: periodogram, MUSIC, and eigenvalue order selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from freqest.linalg import eigh
from freqest.signal import FreqRepresentation, Grid

EIG_FLOOR = 1e-12


@dataclass
class CovarianceEstimate:
    matrix: np.ndarray
    L: int
    snapshots: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def periodogram(samples, grid: Grid = Grid()) -> FreqRepresentation:
    """``|DTFT(samples)(u)|^2 / N`` on the grid (zero-padded FFT)."""
    y = np.asarray(samples, dtype=np.complex128)
    N = len(y)
    if N < 1:
        raise ValueError("need at least one sample")
    if grid.size >= N:
        spectrum = np.fft.fft(y, grid.size)
    else:
        # fewer grid points than samples: fold (alias) the samples first
        folded = np.zeros(grid.size, dtype=np.complex128)
        np.add.at(folded, np.arange(N) % grid.size, y)
        spectrum = np.fft.fft(folded)
    return FreqRepresentation(np.abs(spectrum) ** 2 / N, grid, "periodogram")


def build_covariance(samples, L: int) -> CovarianceEstimate:
    """Forward-backward smoothed covariance from one length-``N`` snapshot.

    Averages ``x_t x_t^H`` over the ``N - L + 1`` sliding windows and their
    conjugate-reversed copies.
    """
    y = np.asarray(samples, dtype=np.complex128)
    N = len(y)
    if not 1 <= L <= N:
        raise ValueError(f"window length L={L} must lie in [1, {N}]")
    windows = np.lib.stride_tricks.sliding_window_view(y, L)  # [N-L+1, L]
    forward = windows.T @ windows.conj() / len(windows)
    backward = forward[::-1, ::-1].conj()
    matrix = 0.5 * (forward + backward)
    vals, vecs = eigh(matrix)
    return CovarianceEstimate(matrix, L, 2 * len(windows), vals, vecs)


def steering_matrix(L: int, freqs) -> np.ndarray:
    """Columns ``e(u) = (1, e^{i2pi u}, ..., e^{i2pi(L-1)u}) / sqrt(L)``."""
    return np.exp(2j * np.pi * np.outer(np.arange(L), np.atleast_1d(freqs))) / np.sqrt(L)


def music_pseudospectrum(cov: CovarianceEstimate, m: int, grid: Grid = Grid()) -> FreqRepresentation:
    """``1 / ||E_n^H e(u)||^2`` with ``E_n`` the ``L - m`` minor eigenvectors."""
    if not 1 <= m < cov.L:
        raise ValueError(f"MUSIC needs 1 <= m < L (m={m}, L={cov.L})")
    noise = cov.eigenvectors[:, m:]
    proj = noise.conj().T @ steering_matrix(cov.L, grid.points)
    energy = np.sum(np.abs(proj) ** 2, axis=0)
    return FreqRepresentation(1.0 / np.maximum(energy, 1e-300), grid, "music")


def _eigenvalues(cov_or_eigs) -> tuple[np.ndarray, int | None]:
    if isinstance(cov_or_eigs, CovarianceEstimate):
        return np.sort(cov_or_eigs.eigenvalues)[::-1], cov_or_eigs.snapshots
    return np.sort(np.asarray(cov_or_eigs, dtype=np.float64))[::-1], None


def information_criterion(cov_or_eigs, kind: str, snapshots: int | None = None) -> np.ndarray:
    """Wax-Kailath AIC or MDL score for every candidate order ``k = 0..L-1``."""
    lam, snaps = _eigenvalues(cov_or_eigs)
    snapshots = snapshots if snapshots is not None else snaps
    if snapshots is None or snapshots < 1:
        raise ValueError("snapshot count required")
    lam = np.maximum(lam, EIG_FLOOR)
    L = len(lam)
    scores = np.empty(L)
    for k in range(L):
        tail = lam[k:]
        log_gm = np.mean(np.log(tail))
        log_am = np.log(np.mean(tail))
        data = -snapshots * (L - k) * (log_gm - log_am)
        dof = k * (2 * L - k)
        penalty = dof if kind == "aic" else 0.5 * dof * np.log(snapshots)
        scores[k] = data + penalty
    return scores


def aic_order(cov_or_eigs, snapshots: int | None = None) -> int:
    return int(np.argmin(information_criterion(cov_or_eigs, "aic", snapshots)))


def mdl_order(cov_or_eigs, snapshots: int | None = None) -> int:
    return int(np.argmin(information_criterion(cov_or_eigs, "mdl", snapshots)))


def sorte_scores(cov_or_eigs) -> np.ndarray:
    """SORTE ratio for ``k = 1..L-3`` (index ``k-1``); ``nan`` marks skipped k."""
    lam, _ = _eigenvalues(cov_or_eigs)
    L = len(lam)
    if L < 4:
        raise ValueError("SORTE needs at least 4 eigenvalues")
    gaps = lam[:-1] - lam[1:]  # gaps[j-1] = lambda_j - lambda_{j+1}
    scores = np.full(L - 3, np.nan)
    for k in range(1, L - 2):
        num = np.var(gaps[k:])
        den = np.var(gaps[k - 1 :])
        if den > 0:
            scores[k - 1] = num / den
        elif num > 0:
            scores[k - 1] = np.inf
    return scores


def sorte_order(cov_or_eigs) -> int:
    scores = sorte_scores(cov_or_eigs)
    if np.all(np.isnan(scores)):
        return 1
    return int(np.nanargmin(scores)) + 1


ORDER_SELECTORS = {"aic": aic_order, "mdl": mdl_order, "sorte": sorte_order}


class Peaks(NamedTuple):
    frequencies: np.ndarray
    indices: np.ndarray
    padded: bool


def local_maxima(values: np.ndarray) -> np.ndarray:
    """Indices of circular local maxima; a plateau reports its leftmost index."""
    v = np.asarray(values)
    starts = np.flatnonzero(v != np.roll(v, 1))
    if len(starts) == 0:
        return starts
    run = v[starts]
    keep = (run > np.roll(run, 1)) & (run > np.roll(run, -1))
    return starts[keep]


def pick_peaks(fr: FreqRepresentation, count: int) -> Peaks:
    """The ``count`` highest local maxima, by value (ties: lower index first).

    When there are fewer than ``count`` maxima the remainder is filled with
    the highest remaining grid points and ``padded`` is set.
    """
    if count < 1:
        raise ValueError("count must be positive")
    v = fr.values
    maxima = local_maxima(v)
    maxima = maxima[np.argsort(-v[maxima], kind="stable")]
    chosen = list(maxima[:count])
    padded = len(chosen) < count
    if padded:
        taken = set(chosen)
        for i in np.argsort(-v, kind="stable"):
            if len(chosen) == count:
                break
            if i not in taken:
                chosen.append(i)
                taken.add(i)
    idx = np.asarray(chosen, dtype=int)
    return Peaks(fr.grid.points[idx], idx, padded)
