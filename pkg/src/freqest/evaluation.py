"""Metrics and benchmark protocols.

Two protocols are supported:

``known-m``
    Every method is told the true number of components and returns the
    ``m`` highest maxima of its representation.  The headline metric is the
    false negative rate (FNR).
``full``
    Each method estimates the count itself (a counting network or an
    eigenvalue criterion), then picks that many peaks.  Reported: Chamfer
    distance, counting error, and FNR of the resulting estimates.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from freqest import classical
from freqest import rng as rngmod
from freqest.nets import ModelBundle, count_components, counter_forward, fr_forward, round_count
from freqest.signal import (
    FreqRepresentation,
    GeneratorConfig,
    Grid,
    SinusoidMixture,
    apply_noise,
    generate_dataset,
    snr_db,
    synthesize,
    wrap_distance,
)

PROTOCOLS = ("known-m", "full")


def fnr_counts(truth, estimates, N: int, circular: bool = True) -> tuple[int, int]:
    """``(undetected, total)``: true frequencies with no estimate within ``1/(2N)``."""
    truth = np.atleast_1d(np.asarray(truth, dtype=np.float64))
    if truth.size == 0:
        raise ValueError("truth must be non-empty")
    est = np.atleast_1d(np.asarray(estimates, dtype=np.float64))
    if est.size == 0:
        return truth.size, truth.size
    d = wrap_distance(truth[:, None], est[None, :], circular)
    # tiny slack so estimates exactly on the radius count as detected
    radius = 1.0 / (2 * N) * (1 + 1e-9)
    return int(np.sum(d.min(axis=1) > radius)), truth.size


def fnr(truth, estimates, N: int, circular: bool = True) -> float:
    missed, total = fnr_counts(truth, estimates, N, circular)
    return missed / total


def aggregate_fnr(counts: Sequence[tuple[int, int]], pooled: bool = True) -> float:
    """Pooled ``sum(missed) / sum(total)`` or the mean of per-signal rates."""
    if not counts:
        return math.nan
    missed = np.array([c[0] for c in counts], dtype=float)
    total = np.array([c[1] for c in counts], dtype=float)
    if pooled:
        return float(missed.sum() / total.sum())
    return float(np.mean(missed / total))


def chamfer(truth, estimates, circular: bool = True) -> float:
    """Symmetric sum of nearest-neighbour distances; ``inf`` if either set is empty."""
    a = np.atleast_1d(np.asarray(truth, dtype=np.float64))
    b = np.atleast_1d(np.asarray(estimates, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        return math.inf
    d = wrap_distance(a[:, None], b[None, :], circular)
    return float(d.min(axis=1).sum() + d.min(axis=0).sum())


def counting_error(truth_counts, estimated_counts) -> float:
    t = np.asarray(truth_counts)
    e = np.asarray(estimated_counts)
    if t.shape != e.shape:
        raise ValueError("count lists differ in length")
    if t.size == 0:
        return math.nan
    return float(np.mean(t != e))


# --- methods -----------------------------------------------------------------


class Method:
    """A frequency estimator evaluated by :func:`benchmark`.

    Subclasses implement ``representations(Y, ms)`` returning ``[B, G]``
    arrays (``ms`` are the orders to assume, needed by MUSIC) and
    ``counts(Y)`` for the full protocol.
    """

    name = "method"

    def __init__(self, grid: Grid = Grid()):
        self.grid = grid

    def representations(self, Y: np.ndarray, ms: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def counts(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def estimate(self, y: np.ndarray, m: Optional[int] = None) -> tuple[np.ndarray, int]:
        Y = np.asarray(y)[None, :]
        m = int(self.counts(Y)[0]) if m is None else int(m)
        fr = self.representations(Y, np.array([m]))[0]
        peaks = classical.pick_peaks(FreqRepresentation(fr, self.grid), m)
        return peaks.frequencies, m


class PeriodogramMethod(Method):
    name = "periodogram"

    def __init__(self, grid: Grid = Grid(), order_selector: str = "mdl", L: int = 25):
        super().__init__(grid)
        self.order_selector = classical.ORDER_SELECTORS[order_selector]
        self.L = L

    def representations(self, Y, ms):
        return np.stack([classical.periodogram(y, self.grid).values for y in Y])

    def counts(self, Y):
        return np.array([max(1, self.order_selector(classical.build_covariance(y, self.L))) for y in Y])


class MusicMethod(PeriodogramMethod):
    name = "music"

    def representations(self, Y, ms):
        out = []
        for y, m in zip(Y, ms):
            cov = classical.build_covariance(y, self.L)
            out.append(classical.music_pseudospectrum(cov, int(min(max(m, 1), self.L - 1)), self.grid).values)
        return np.stack(out)


class LearnedMethod(Method):
    def __init__(self, fr_bundle: ModelBundle, counter_bundle: Optional[ModelBundle] = None, name: str = "deepfreq"):
        super().__init__(Grid(fr_bundle.config.grid))
        self.fr_model = fr_bundle.model
        self.counter_model = counter_bundle.model if counter_bundle else None
        self.name = name

    def representations(self, Y, ms):
        return fr_forward(self.fr_model, Y)

    def counts(self, Y):
        if self.counter_model is None:
            raise ValueError(f"{self.name}: full protocol needs a counting model")
        return np.atleast_1d(count_components(self.counter_model, self.representations(Y, None)))


# --- benchmark ---------------------------------------------------------------


@dataclass
class EvalRow:
    sigma: float
    snr_db: float
    fnr: float
    counting_error: float
    mean_chamfer: float
    std_err: float
    failure_rate: float
    n_signals: int
    runtime_ms: Optional[float] = None


@dataclass
class EvalReport:
    method: str
    protocol: str
    test_seed: int
    test_size: int
    rows: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "protocol": self.protocol,
            "test_seed": self.test_seed,
            "test_size": self.test_size,
            "rows": [asdict(r) for r in self.rows],
        }


def test_set_seed(seed: int, sigma_index: int) -> int:
    return int(np.random.SeedSequence([seed, rngmod.TEST_SET, sigma_index]).generate_state(1, np.uint64)[0])


def _evaluate_record(method: Method, rec, protocol: str, N: int, circular: bool):
    y = rec.noisy[None, :]
    m_true = rec.truth.m
    if protocol == "known-m":
        m_hat = m_true
    else:
        m_hat = int(method.counts(y)[0])
    fr = method.representations(y, np.array([m_hat]))[0]
    est = classical.pick_peaks(FreqRepresentation(fr, method.grid), m_hat).frequencies
    return fnr_counts(rec.truth.frequencies, est, N, circular), chamfer(rec.truth.frequencies, est, circular), m_hat


def evaluate_method(
    method: Method,
    records,
    protocol: str,
    N: int,
    circular: bool = True,
    pooled_fnr: bool = True,
    threads: int = 1,
    timing: bool = False,
) -> EvalRow:
    """Run one method over one test set; failures are excluded and counted."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")

    def run(rec):
        t0 = time.perf_counter()
        try:
            out = _evaluate_record(method, rec, protocol, N, circular)
        except Exception:  # noqa: BLE001 - a failing record must not stop the sweep
            out = None
        return out, time.perf_counter() - t0

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, records))
    else:
        results = [run(r) for r in records]

    counts, chamfers, true_m, est_m, elapsed = [], [], [], [], []
    failures = 0
    for rec, (out, dt) in zip(records, results):
        elapsed.append(dt)
        if out is None or not math.isfinite(out[1]):
            failures += 1
            continue
        counts.append(out[0])
        chamfers.append(out[1])
        true_m.append(rec.truth.m)
        est_m.append(out[2])
    sigma = records[0].sigma if records else math.nan
    ch = np.asarray(chamfers)
    return EvalRow(
        sigma=float(sigma),
        snr_db=snr_db(sigma),
        fnr=aggregate_fnr(counts, pooled_fnr),
        counting_error=counting_error(true_m, est_m) if protocol == "full" else math.nan,
        mean_chamfer=float(ch.mean()) if ch.size else math.nan,
        std_err=float(ch.std(ddof=1) / np.sqrt(ch.size)) if ch.size > 1 else math.nan,
        failure_rate=failures / len(records) if records else math.nan,
        n_signals=len(records),
        runtime_ms=float(1e3 * np.mean(elapsed)) if timing and elapsed else None,
    )


def benchmark(
    methods: Sequence[Method],
    sigmas: Sequence[float],
    protocol: str = "known-m",
    n_signals: int = 1000,
    gen: Optional[GeneratorConfig] = None,
    seed: int = 0,
    circular: bool = True,
    pooled_fnr: bool = True,
    threads: int = 1,
    timing: bool = False,
) -> list[EvalReport]:
    """Evaluate every method at every noise level on seeded test sets."""
    gen = gen or GeneratorConfig()
    reports = [EvalReport(m.name, protocol, seed, n_signals) for m in methods]
    for i, sigma in enumerate(sigmas):
        test_gen = GeneratorConfig(**{**gen.to_dict(), "seed": test_set_seed(seed, i)})
        records = generate_dataset(test_gen, n_signals, sigma=sigma)
        for method, report in zip(methods, reports):
            report.rows.append(evaluate_method(method, records, protocol, gen.N, circular, pooled_fnr, threads, timing))
    return reports


CSV_COLUMNS = [
    "method",
    "protocol",
    "sigma",
    "snr_db",
    "fnr",
    "counting_error",
    "mean_chamfer",
    "std_err",
    "failure_rate",
    "n_signals",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def reports_to_csv(reports: Sequence[EvalReport], timing: bool = False) -> str:
    cols = CSV_COLUMNS + (["runtime_ms"] if timing else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for rep in reports:
        for row in rep.rows:
            d = {"method": rep.method, "protocol": rep.protocol, **asdict(row)}
            w.writerow([_fmt(d[c]) for c in cols])
    return buf.getvalue()


def reports_to_long_csv(reports: Sequence[EvalReport]) -> str:
    """One ``(method, protocol, sigma, snr_db, metric, value)`` row per number."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "protocol", "sigma", "snr_db", "metric", "value"])
    for rep in reports:
        for row in rep.rows:
            for metric in ("fnr", "counting_error", "mean_chamfer", "std_err", "failure_rate"):
                value = getattr(row, metric)
                if value is None or (isinstance(value, float) and math.isnan(value)):
                    continue
                w.writerow([rep.method, rep.protocol, _fmt(row.sigma), _fmt(row.snr_db), metric, _fmt(value)])
    return buf.getvalue()


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    return json.dumps([clean(r.to_dict()) for r in reports], indent=2, sort_keys=True) + "\n"


# --- representation profiles -------------------------------------------------


def fr_profile(
    fr_model,
    frequencies,
    magnitudes,
    n_trials: int = 100,
    sigma: float = 0.0,
    seed: int = 0,
    complex_noise: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of the learned representation over random phases.

    Frequencies and magnitudes stay fixed; each trial draws fresh phases and
    a fresh noise vector at level ``sigma``.
    """
    if n_trials < 2:
        raise ValueError("n_trials must be at least 2")
    freqs = np.asarray(frequencies, dtype=np.float64)
    mags = np.asarray(magnitudes, dtype=np.float64)
    N = fr_model.cfg.n_samples
    Y = np.empty((n_trials, N), dtype=np.complex128)
    for t in range(n_trials):
        rng = rngmod.stream(seed, rngmod.PROFILE, t)
        phases = rng.uniform(0, 2 * np.pi, size=len(freqs))
        clean = synthesize(SinusoidMixture(freqs, mags * np.exp(1j * phases)), N)
        Y[t] = apply_noise(clean, sigma, rng, complex_noise)
    frs = fr_forward(fr_model, Y).astype(np.float64)
    return frs.mean(axis=0), frs.std(axis=0, ddof=1) / np.sqrt(n_trials)


def counter_accuracy(counter_bundle: ModelBundle, frs: np.ndarray, true_counts) -> float:
    raw = counter_forward(counter_bundle.model, frs)
    return float(np.mean(round_count(raw, counter_bundle.config.m_max) == np.asarray(true_counts)))
