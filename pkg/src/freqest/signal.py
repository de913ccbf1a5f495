"""Multisinusoidal signal model, noise model, and synthetic data generator.

A signal is ``S(t) = sum_j a_j exp(i 2 pi f_j t)`` observed at
``t = 1..N`` with additive noise whose l2 norm is a fixed fraction
``sigma`` of the clean signal's norm.  Frequencies live on the unit
circle ``[0, 1)``: at unit-rate sampling ``f`` and ``f + 1`` alias.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from freqest import rng as rngmod


class InfeasibleConfig(RuntimeError):
    """Raised when the generator cannot satisfy its separation constraint."""


def wrap_distance(a, b, circular: bool = True):
    """Distance between frequencies; on the unit circle by default."""
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    if not circular:
        return d
    d = np.mod(d, 1.0)
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class Grid:
    """``size`` uniformly spaced points ``k / size`` on ``[0, 1)``."""

    size: int = 1000

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.size, dtype=np.float64) / self.size

    @property
    def spacing(self) -> float:
        return 1.0 / self.size


@dataclass
class FreqRepresentation:
    values: np.ndarray
    grid: Grid
    kind: str = "target"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"representation has {self.values.shape} values for a grid of {self.grid.size}")


@dataclass
class SinusoidMixture:
    frequencies: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        self.frequencies = np.atleast_1d(np.asarray(self.frequencies, dtype=np.float64))
        self.amplitudes = np.atleast_1d(np.asarray(self.amplitudes, dtype=np.complex128))
        if self.frequencies.shape != self.amplitudes.shape or self.frequencies.ndim != 1:
            raise ValueError("frequencies and amplitudes must be 1-D and of equal length")

    @property
    def m(self) -> int:
        return len(self.frequencies)

    def __add__(self, other: "SinusoidMixture") -> "SinusoidMixture":
        return SinusoidMixture(
            np.concatenate([self.frequencies, other.frequencies]),
            np.concatenate([self.amplitudes, other.amplitudes]),
        )


@dataclass
class SampleRecord:
    clean: np.ndarray
    noisy: np.ndarray
    sigma: float
    truth: SinusoidMixture

    @property
    def N(self) -> int:
        return len(self.noisy)


@dataclass
class GeneratorConfig:
    N: int = 50
    m_max: int = 10
    sep_floor: Optional[float] = None
    sep_spread_std: Optional[float] = None
    amp_floor: float = 0.1
    sigma_range: tuple = (0.0, 1.0)
    seed: int = 0
    circular: bool = True
    complex_noise: bool = True
    max_retries: int = 1000

    def __post_init__(self):
        if self.sep_floor is None:
            self.sep_floor = 1.0 / self.N
        if self.sep_spread_std is None:
            self.sep_spread_std = 2.5 / self.N
        self.sigma_range = tuple(float(s) for s in self.sigma_range)
        lo, hi = self.sigma_range
        if self.N < 1 or self.m_max < 1:
            raise ValueError("N and m_max must be positive")
        if self.sep_floor <= 0 or self.amp_floor <= 0:
            raise ValueError("sep_floor and amp_floor must be positive")
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"sigma_range {self.sigma_range} must lie within [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_range"] = list(self.sigma_range)
        return d


def synthesize(mix: SinusoidMixture, N: int) -> np.ndarray:
    """Clean samples ``S(1), ..., S(N)``."""
    if mix.m == 0:
        raise ValueError("empty mixture")
    if N < 1:
        raise ValueError("N must be positive")
    t = np.arange(1, N + 1, dtype=np.float64)
    return np.exp(2j * np.pi * np.outer(t, mix.frequencies)) @ mix.amplitudes


def apply_noise(clean: np.ndarray, sigma: float, rng: np.random.Generator, complex_noise: bool = True) -> np.ndarray:
    """Add Gaussian noise rescaled so that ``||noise|| = sigma * ||clean||``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    clean = np.asarray(clean, dtype=np.complex128)
    z = rng.standard_normal(clean.shape).astype(np.complex128)
    if complex_noise:
        z += 1j * rng.standard_normal(clean.shape)
    if sigma == 0:
        return clean.copy()
    norm = np.linalg.norm(clean)
    if norm == 0:
        raise ValueError("cannot scale noise relative to an all-zero signal")
    return clean + z * (sigma * norm / np.linalg.norm(z))


def snr_db(sigma: float) -> float:
    return math.inf if sigma == 0 else -20.0 * math.log10(sigma)


def sample_mixture(cfg: GeneratorConfig, rng: np.random.Generator) -> SinusoidMixture:
    """Draw a random mixture: uniform count, separated frequencies, floored amplitudes.

    Frequencies are an offset plus a cumulative sum of separations
    ``sep_floor + |w|``, wrapped onto the circle.  A draw whose last-to-first
    gap (across the wrap) falls under ``sep_floor`` is redrawn.  Without
    wrap-around the whole run must fit inside ``[0, 1)``.
    """
    m = int(rng.integers(1, cfg.m_max + 1))
    limit = 1.0 - cfg.sep_floor if cfg.circular else 1.0
    for _ in range(cfg.max_retries):
        seps = cfg.sep_floor + np.abs(rng.normal(0.0, cfg.sep_spread_std, size=m - 1))
        span = seps.sum()
        if span <= limit and (cfg.circular or span < 1.0):
            break
    else:
        raise InfeasibleConfig(f"no feasible frequency placement for m={m} after {cfg.max_retries} tries")
    offset = rng.uniform(0.0, 1.0 if cfg.circular else 1.0 - span)
    freqs = np.mod(offset + np.concatenate([[0.0], np.cumsum(seps)]), 1.0)
    mags = cfg.amp_floor + np.abs(rng.standard_normal(m))
    phases = rng.uniform(0.0, 2 * np.pi, size=m)
    order = np.argsort(freqs, kind="stable")
    return SinusoidMixture(freqs[order], (mags * np.exp(1j * phases))[order])


def generate_record(cfg: GeneratorConfig, index: int, sigma: Optional[float] = None) -> SampleRecord:
    """Record ``index`` of the dataset keyed by ``cfg.seed``; pure in its inputs."""
    rng = rngmod.stream(cfg.seed, rngmod.DATASET, index)
    mix = sample_mixture(cfg, rng)
    clean = synthesize(mix, cfg.N)
    drawn = rng.uniform(*cfg.sigma_range)
    sigma = drawn if sigma is None else float(sigma)
    noisy = apply_noise(clean, sigma, rng, cfg.complex_noise)
    return SampleRecord(clean, noisy, float(sigma), mix)


def generate_dataset(
    cfg: GeneratorConfig, n_signals: int, sigma: Optional[float] = None, threads: int = 1
) -> list[SampleRecord]:
    """Generate ``n_signals`` records; identical output for any ``threads``."""
    if threads <= 1:
        return [generate_record(cfg, i, sigma) for i in range(n_signals)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: generate_record(cfg, i, sigma), range(n_signals)))


def dirichlet_kernel(f, N: int):
    """``D_N(f) = sum_{k=1}^N exp(-i 2 pi k f)`` in closed form.

    Uses ``exp(-i pi (N+1) d) sin(pi N d) / sin(pi d)`` with ``d`` the
    distance from ``f`` to the nearest integer, which is exact at integers
    (value ``N``) and keeps full relative precision near them.
    """
    if N < 1:
        raise ValueError("N must be positive")
    f = np.asarray(f, dtype=np.float64)
    d = f - np.rint(f)
    s = np.sin(np.pi * d)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(d == 0, float(N), np.sin(np.pi * N * d) / np.where(d == 0, 1.0, s))
    out = np.exp(-1j * np.pi * (N + 1) * d) * ratio
    return out[()] if out.ndim == 0 else out


def dtft_matrix(N: int, freqs) -> np.ndarray:
    """``E[g, k-1] = exp(-i 2 pi k f_g)`` for ``k = 1..N``."""
    t = np.arange(1, N + 1, dtype=np.float64)
    return np.exp(-2j * np.pi * np.outer(np.atleast_1d(freqs), t))


def dtft(samples, f):
    """``sum_k samples[k-1] exp(-i 2 pi k f)`` at scalar or array ``f``."""
    samples = np.asarray(samples, dtype=np.complex128)
    out = dtft_matrix(len(samples), f) @ samples
    return out[0] if np.ndim(f) == 0 else out


def ground_truth_fr(
    mix: SinusoidMixture, grid: Grid, kernel_std: float, circular: bool = True
) -> FreqRepresentation:
    """Sum of unit-height Gaussian bumps centred on the true frequencies."""
    if kernel_std <= 0:
        raise ValueError("kernel_std must be positive")
    d = wrap_distance(grid.points[:, None], mix.frequencies[None, :], circular)
    return FreqRepresentation(np.exp(-(d**2) / (2 * kernel_std**2)).sum(axis=1), grid, "target")


def ground_truth_batch(
    frequency_sets: Sequence[np.ndarray], grid: Grid, kernel_std: float, circular: bool = True
) -> np.ndarray:
    """Stacked ground-truth representations, shape ``[B, G]``."""
    out = np.zeros((len(frequency_sets), grid.size))
    pts = grid.points
    for i, freqs in enumerate(frequency_sets):
        d = wrap_distance(pts[:, None], np.asarray(freqs)[None, :], circular)
        out[i] = np.exp(-(d**2) / (2 * kernel_std**2)).sum(axis=1)
    return out
