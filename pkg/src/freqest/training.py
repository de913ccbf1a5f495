"""Training loops for the representation and counting networks.

A fixed set of clean signals is drawn once.  Every epoch each signal gets a
fresh noise level and noise vector from the stream keyed by
``(seed, epoch, signal index)``, so a run is reproducible regardless of
how batches are assembled, and a resumed run retraces the same trajectory.
The last ``val_fraction`` of the signals form a validation set with fixed
noise; the weights with the lowest validation loss are returned.

With ``augment`` each training signal is also given a random circular
frequency shift and global phase every epoch, which keeps its spacing and
magnitudes but moves where its frequencies sit.  A large network fitted to
a small set of fixed signals otherwise memorizes their positions.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from freqest import rng as rngmod
from freqest.nets import (
    CounterConfig,
    FRNetConfig,
    FrequencyCounterNet,
    FrequencyRepresentationNet,
    ModelBundle,
    fr_forward,
    prepare_input,
)
from freqest.nn import functional as F
from freqest.nn.optim import Adam
from freqest.nn.tensor import Tensor, no_grad
from freqest.signal import GeneratorConfig, Grid, apply_noise, generate_dataset, ground_truth_batch

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    n_signals: int = 2000
    epochs: int = 50
    batch_size: int = 256
    lr: float = 3e-4
    sigma_range: tuple = (0.0, 1.0)
    seed: int = 0
    eval_every: int = 1
    val_fraction: float = 0.05
    augment: bool = False

    def __post_init__(self):
        self.sigma_range = tuple(float(s) for s in self.sigma_range)
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.n_signals < self.batch_size:
            raise ValueError("n_signals must be at least batch_size")
        if self.batch_size < 2:
            raise ValueError("batch norm needs batch_size >= 2")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_range"] = list(self.sigma_range)
        return d


@dataclass
class TrainingData:
    clean: np.ndarray  # [n, N] complex
    counts: np.ndarray  # [n]
    targets: np.ndarray  # [n, G] ground-truth representations
    n_train: int
    frequencies: list  # per-signal true frequencies
    grid: Grid
    kernel_std: float
    circular: bool = True

    @classmethod
    def build(cls, cfg: TrainConfig, gen: GeneratorConfig, grid: Grid, kernel_std: float, records=None) -> "TrainingData":
        """Clean signals from ``records`` if given, else freshly generated."""
        if records is None:
            records = generate_dataset(gen, cfg.n_signals, sigma=0.0)
        if len(records) != cfg.n_signals:
            raise ValueError("record count differs from n_signals")
        clean = np.stack([r.clean for r in records])
        counts = np.array([r.truth.m for r in records])
        targets = ground_truth_batch([r.truth.frequencies for r in records], grid, kernel_std, gen.circular)
        n_val = max(2, int(round(cfg.val_fraction * cfg.n_signals))) if cfg.val_fraction > 0 else 0
        freqs = [r.truth.frequencies for r in records]
        return cls(clean, counts, targets, cfg.n_signals - n_val, freqs, grid, kernel_std, gen.circular)

    def shifts(self, cfg: TrainConfig, indices: np.ndarray, epoch: int) -> np.ndarray:
        """Per-row ``(frequency shift, phase)``; zero unless augmenting a training row."""
        out = np.zeros((len(indices), 2))
        if not cfg.augment:
            return out
        for row, i in enumerate(indices):
            if i >= self.n_train:
                continue
            rng = rngmod.stream(cfg.seed, rngmod.AUGMENT, epoch, int(i))
            f = self.frequencies[i]
            lo, hi = (0.0, 1.0) if self.circular else (-f.min(), 1.0 - f.max())
            out[row] = rng.uniform(lo, hi), rng.uniform(0.0, 2 * np.pi)
        return out

    def noisy(
        self, cfg: TrainConfig, indices: np.ndarray, epoch: int, complex_noise: bool = True, shifts=None
    ) -> np.ndarray:
        """Noisy copies of ``clean[indices]``; validation rows use fixed noise."""
        N = self.clean.shape[1]
        t = np.arange(1, N + 1)
        out = np.empty((len(indices), N), dtype=np.complex128)
        for row, i in enumerate(indices):
            if i >= self.n_train:
                rng = rngmod.stream(cfg.seed, rngmod.VALID_NOISE, int(i))
            else:
                rng = rngmod.stream(cfg.seed, rngmod.TRAIN_NOISE, epoch, int(i))
            sigma = rng.uniform(*cfg.sigma_range)
            clean = self.clean[i]
            if shifts is not None and shifts[row].any():
                delta, phase = shifts[row]
                clean = clean * np.exp(1j * (2 * np.pi * delta * t + phase))
            out[row] = apply_noise(clean, sigma, rng, complex_noise)
        return out

    def shifted_targets(self, indices: np.ndarray, shifts: np.ndarray) -> np.ndarray:
        if not shifts.any():
            return self.targets[indices]
        moved = [np.mod(self.frequencies[i] + d, 1.0) for i, d in zip(indices, shifts[:, 0])]
        return ground_truth_batch(moved, self.grid, self.kernel_std, self.circular)


def epoch_batches(cfg: TrainConfig, n_train: int, epoch: int) -> list[np.ndarray]:
    perm = rngmod.stream(cfg.seed, rngmod.SHUFFLE, epoch).permutation(n_train)
    n_batches = max(1, math.ceil(n_train / cfg.batch_size))
    return np.array_split(perm, n_batches)


class _Trainer:
    """Shared epoch loop; subclasses supply inputs, targets, and the model."""

    def __init__(self, cfg: TrainConfig, model, data: TrainingData, log_path=None, checkpoint_path=None):
        self.cfg = cfg
        self.model = model
        self.data = data
        self.opt = Adam(model.parameters(), lr=cfg.lr)
        self.log_path = Path(log_path) if log_path else None
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None
        self.history: list[dict] = []
        self.best_state = None
        self.best_val = math.inf
        self.best_epoch = -1
        self.initial_loss = math.nan
        self.start_epoch = 0

    def batch(self, indices, epoch) -> tuple[np.ndarray, np.ndarray]:
        """Network inputs and targets for ``indices`` at ``epoch``."""
        raise NotImplementedError

    def loss(self, x: np.ndarray, t: np.ndarray) -> Tensor:
        dtype = self.model.parameters()[0].dtype
        out = self.model(Tensor(x.astype(dtype)))
        return F.mse_loss(out, t.astype(dtype))

    def validate(self) -> float:
        val_idx = np.arange(self.data.n_train, len(self.data.clean))
        if len(val_idx) == 0:
            return math.nan
        x, t = self.batch(val_idx, 0)
        self.model.eval()
        try:
            with no_grad():
                total = 0.0
                for i in range(0, len(val_idx), self.cfg.batch_size):
                    sl = slice(i, i + self.cfg.batch_size)
                    total += float(self.loss(x[sl], t[sl]).data) * len(x[sl])
        finally:
            self.model.train()
        return total / len(val_idx)

    def run_epoch(self, epoch: int) -> float:
        self.model.train()
        total, seen = 0.0, 0
        for batch in epoch_batches(self.cfg, self.data.n_train, epoch):
            x, t = self.batch(batch, epoch)
            loss = self.loss(x, t)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            if math.isnan(self.initial_loss):
                self.initial_loss = value
            self.opt.zero_grad()
            loss.backward()
            self.opt.step()
            total += value * len(batch)
            seen += len(batch)
        return total / seen

    def fit(self) -> None:
        for epoch in range(self.start_epoch, self.cfg.epochs):
            t0 = time.perf_counter()
            train_loss = self.run_epoch(epoch)
            row = {"epoch": epoch, "train_loss": train_loss, "val_loss": None}
            last = epoch == self.cfg.epochs - 1
            if (epoch + 1) % self.cfg.eval_every == 0 or last:
                val = self.validate()
                row["val_loss"] = val
                # with no validation split, keep the latest weights
                if math.isnan(val) or val < self.best_val:
                    self.best_val = val if not math.isnan(val) else self.best_val
                    self.best_epoch = epoch
                    self.best_state = copy.deepcopy(self.model.state_dict())
            # wall time goes to the log only so checkpoints stay reproducible
            self.history.append(row)
            log.info("epoch %d train %.5f val %s", epoch, train_loss, row["val_loss"])
            if self.log_path:
                with self.log_path.open("a") as fh:
                    fh.write(json.dumps({**row, "wall_time": time.perf_counter() - t0}) + "\n")
            if self.checkpoint_path:
                self.save_checkpoint(epoch)

    def metadata(self) -> dict:
        return {
            "seed": self.cfg.seed,
            "epochs": self.cfg.epochs,
            "train_config": self.cfg.to_dict(),
            "initial_loss": self.initial_loss,
            "final_loss": self.history[-1]["train_loss"] if self.history else math.nan,
            "best_val_loss": self.best_val,
            "best_epoch": self.best_epoch,
            "train_losses": [h["train_loss"] for h in self.history],
        }

    def save_checkpoint(self, epoch: int) -> None:
        from freqest.io import save_training_state

        save_training_state(self.checkpoint_path, self, epoch)

    def restore(self, path) -> None:
        from freqest.io import load_training_state

        load_training_state(path, self)

    def bundle(self, config) -> ModelBundle:
        if self.best_state is not None:
            self.model.load_state_dict(self.best_state)
        self.model.eval()
        return ModelBundle(config, self.model, self.metadata())


class _FRTrainer(_Trainer):
    def __init__(self, *args, complex_noise=True, **kwargs):
        super().__init__(*args, **kwargs)
        self.complex_noise = complex_noise

    def batch(self, indices, epoch):
        shifts = self.data.shifts(self.cfg, indices, epoch)
        x = prepare_input(self.data.noisy(self.cfg, indices, epoch, self.complex_noise, shifts))
        return x, self.data.shifted_targets(indices, shifts)


class _CounterTrainer(_Trainer):
    def __init__(self, *args, fr_model: FrequencyRepresentationNet, complex_noise=True, **kwargs):
        super().__init__(*args, **kwargs)
        self.fr_model = fr_model
        self.complex_noise = complex_noise

    def batch(self, indices, epoch):
        shifts = self.data.shifts(self.cfg, indices, epoch)
        x = fr_forward(self.fr_model, self.data.noisy(self.cfg, indices, epoch, self.complex_noise, shifts))
        return x, self.data.counts[indices].astype(np.float64)


def _sized(cfg: TrainConfig, records) -> TrainConfig:
    if records is None or len(records) == cfg.n_signals:
        return cfg
    return replace(cfg, n_signals=len(records))


def train_fr(
    cfg: TrainConfig,
    gen: GeneratorConfig,
    net_cfg: Optional[FRNetConfig] = None,
    log_path=None,
    checkpoint_path=None,
    resume_from=None,
    records=None,
) -> ModelBundle:
    """Fit a representation network to ground-truth Gaussian-bump targets.

    ``records`` supplies the clean signals (their stored noise is ignored);
    without it ``cfg.n_signals`` mixtures are drawn from ``gen``.
    """
    net_cfg = net_cfg or FRNetConfig(n_samples=gen.N)
    cfg = _sized(cfg, records)
    data = TrainingData.build(cfg, gen, Grid(net_cfg.grid), net_cfg.kernel_std, records)
    model = FrequencyRepresentationNet(net_cfg, seed=cfg.seed)
    trainer = _FRTrainer(cfg, model, data, log_path, checkpoint_path, complex_noise=gen.complex_noise)
    if resume_from:
        trainer.restore(resume_from)
    trainer.fit()
    bundle = trainer.bundle(net_cfg)
    bundle.metadata["generator"] = gen.to_dict()
    return bundle


def train_counter(
    cfg: TrainConfig,
    fr_bundle: ModelBundle,
    gen: GeneratorConfig,
    net_cfg: Optional[CounterConfig] = None,
    log_path=None,
    checkpoint_path=None,
    resume_from=None,
    records=None,
) -> ModelBundle:
    """Fit a counting network on representations from a frozen FR model."""
    fr_model = fr_bundle.model
    fr_model.eval()
    net_cfg = net_cfg or CounterConfig(grid=fr_bundle.config.grid, m_max=gen.m_max)
    cfg = _sized(cfg, records)
    data = TrainingData.build(cfg, gen, Grid(net_cfg.grid), fr_bundle.config.kernel_std, records)
    model = FrequencyCounterNet(net_cfg, seed=cfg.seed)
    trainer = _CounterTrainer(
        cfg, model, data, log_path, checkpoint_path, fr_model=fr_model, complex_noise=gen.complex_noise
    )
    if resume_from:
        trainer.restore(resume_from)
    trainer.fit()
    bundle = trainer.bundle(net_cfg)
    bundle.metadata["generator"] = gen.to_dict()
    return bundle
