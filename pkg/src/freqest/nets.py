"""Frequency-representation and frequency-counting networks.

The representation network maps ``N`` complex samples (as ``2N``
interleaved reals) to a function on a ``G``-point frequency grid.  Two
variants share the conv trunk:

* ``deepfreq``: ``C`` parallel linear maps produce a ``C x M`` feature
  matrix, the trunk runs ``conv_layers`` circular conv/BN/ReLU blocks, and
  a strided transposed convolution decodes to the grid.
* ``psnet``: a single linear map (one channel) and a fully connected
  decoder.

The counting network regresses the number of components from a
representation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from freqest import rng as rngmod
from freqest.nn import functional as F
from freqest.nn.layers import CircularConv1d, CircularConvTranspose1d, ConvBlock, Linear, Module
from freqest.nn.tensor import Tensor, no_grad
from freqest.signal import Grid, dtft_matrix


@dataclass
class FRNetConfig:
    n_samples: int = 50
    channels: int = 64
    encoder_out: int = 125
    conv_layers: int = 20
    conv_filter: int = 3
    conv_channels: int = 64
    decoder_kernel: int = 25
    decoder_stride: int = 8
    grid: int = 1000
    kernel_std: Optional[float] = None
    variant: str = "deepfreq"

    def __post_init__(self):
        if self.kernel_std is None:
            self.kernel_std = 0.3 / self.n_samples
        if self.variant not in ("deepfreq", "psnet"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "psnet":
            self.channels = 1
        if self.encoder_out * self.decoder_stride != self.grid:
            raise ValueError("encoder_out * decoder_stride must equal grid")
        if self.conv_filter % 2 == 0 or self.decoder_kernel % 2 == 0:
            raise ValueError("filter lengths must be odd")

    def to_dict(self) -> dict:
        return {"kind": "fr", **asdict(self)}


@dataclass
class CounterConfig:
    grid: int = 1000
    stem_filters: int = 16
    stem_kernel: int = 25
    stem_stride: int = 5
    conv_layers: int = 20
    conv_filters: int = 16
    conv_kernel: int = 3
    m_max: int = 10

    def __post_init__(self):
        if self.grid % self.stem_stride:
            raise ValueError("stem_stride must divide grid")
        if self.stem_kernel % 2 == 0 or self.conv_kernel % 2 == 0:
            raise ValueError("filter lengths must be odd")

    @property
    def feature_length(self) -> int:
        return self.grid // self.stem_stride

    def to_dict(self) -> dict:
        return {"kind": "counter", **asdict(self)}


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    if kind == "fr":
        return FRNetConfig(**d)
    if kind == "counter":
        return CounterConfig(**d)
    raise ValueError(f"unknown config kind {kind!r}")


class FrequencyRepresentationNet(Module):
    def __init__(self, cfg: FRNetConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        rng = rngmod.stream(seed, rngmod.INIT)
        n_in = 2 * cfg.n_samples
        self.encoder = Linear(n_in, cfg.channels * cfg.encoder_out, rng, dtype)
        c_in = cfg.channels
        blocks = []
        for _ in range(cfg.conv_layers):
            blocks.append(ConvBlock(c_in, cfg.conv_channels, cfg.conv_filter, rng, dtype))
            c_in = cfg.conv_channels
        self.blocks = blocks
        if cfg.variant == "deepfreq":
            self.decoder = CircularConvTranspose1d(c_in, 1, cfg.decoder_kernel, rng, cfg.decoder_stride, dtype)
        else:
            self.decoder = Linear(c_in * cfg.encoder_out, cfg.grid, rng, dtype)

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        B = x.shape[0]
        if x.ndim != 2 or x.shape[1] != 2 * cfg.n_samples:
            raise ValueError(f"expected input [B, {2 * cfg.n_samples}], got {x.shape}")
        h = F.reshape(self.encoder(x), (B, cfg.channels, cfg.encoder_out))
        for block in self.blocks:
            h = block(h)
        if cfg.variant == "deepfreq":
            return F.reshape(self.decoder(h), (B, cfg.grid))
        return self.decoder(F.reshape(h, (B, -1)))

    def encoder_matrices(self) -> np.ndarray:
        """The ``C`` encoder maps as complex ``[C, M, N]`` arrays.

        Row ``r`` of channel ``c`` acts on the interleaved input as
        ``sum_k re(h_k) re(y_k) + im(h_k) im(y_k)``, so ``h`` collects its
        even/odd weights as real/imaginary parts.
        """
        cfg = self.cfg
        w = self.encoder.weight.data.astype(np.float64).reshape(cfg.channels, cfg.encoder_out, cfg.n_samples, 2)
        return w[..., 0] + 1j * w[..., 1]


class FrequencyCounterNet(Module):
    def __init__(self, cfg: CounterConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        rng = rngmod.stream(seed, rngmod.INIT, 1)
        self.stem = CircularConv1d(1, cfg.stem_filters, cfg.stem_kernel, rng, cfg.stem_stride, dtype)
        c_in = cfg.stem_filters
        blocks = []
        for _ in range(cfg.conv_layers):
            blocks.append(ConvBlock(c_in, cfg.conv_filters, cfg.conv_kernel, rng, dtype))
            c_in = cfg.conv_filters
        self.blocks = blocks
        self.head = Linear(c_in * cfg.feature_length, 1, rng, dtype)

    def features(self, fr: Tensor) -> Tensor:
        B = fr.shape[0]
        if fr.ndim != 2 or fr.shape[1] != self.cfg.grid:
            raise ValueError(f"expected input [B, {self.cfg.grid}], got {fr.shape}")
        return F.relu(self.stem(F.reshape(fr, (B, 1, self.cfg.grid))))

    def forward(self, fr: Tensor) -> Tensor:
        h = self.features(fr)
        for block in self.blocks:
            h = block(h)
        B = fr.shape[0]
        return F.reshape(self.head(F.reshape(h, (B, -1))), (B,))


def expected_parameter_count(cfg) -> int:
    """Closed-form parameter count (weights, biases, BN affine)."""
    if isinstance(cfg, FRNetConfig):
        n_in = 2 * cfg.n_samples
        total = (n_in + 1) * cfg.channels * cfg.encoder_out
        c_in = cfg.channels
        for _ in range(cfg.conv_layers):
            total += cfg.conv_channels * (c_in * cfg.conv_filter + 1) + 2 * cfg.conv_channels
            c_in = cfg.conv_channels
        if cfg.variant == "deepfreq":
            total += c_in * cfg.decoder_kernel + 1
        else:
            total += (c_in * cfg.encoder_out + 1) * cfg.grid
        return total
    total = cfg.stem_filters * (cfg.stem_kernel + 1)
    c_in = cfg.stem_filters
    for _ in range(cfg.conv_layers):
        total += cfg.conv_filters * (c_in * cfg.conv_kernel + 1) + 2 * cfg.conv_filters
        c_in = cfg.conv_filters
    return total + c_in * cfg.feature_length + 1


def build_model(cfg, seed: int = 0, dtype=np.float32) -> Module:
    if isinstance(cfg, FRNetConfig):
        return FrequencyRepresentationNet(cfg, seed, dtype)
    return FrequencyCounterNet(cfg, seed, dtype)


@dataclass
class ModelBundle:
    """A network together with its config and training metadata."""

    config: object
    model: Module
    metadata: dict = field(default_factory=dict)


def prepare_input(samples: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Scale each measurement vector by its largest modulus, then interleave
    real and imaginary parts: ``[B, N]`` complex -> ``[B, 2N]`` real."""
    y = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    peak = np.abs(y).max(axis=1, keepdims=True)
    peak[peak == 0] = 1.0
    y = y / peak
    out = np.empty((y.shape[0], 2 * y.shape[1]), dtype=np.float64)
    out[:, 0::2] = y.real
    out[:, 1::2] = y.imag
    return out.astype(dtype)


def _batched_eval(model: Module, inputs: np.ndarray, batch: int) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        dtype = model.parameters()[0].dtype
        with no_grad():
            outs = [model(Tensor(inputs[i : i + batch].astype(dtype))).data for i in range(0, len(inputs), batch)]
    finally:
        model.train(was_training)
    return np.concatenate(outs, axis=0)


def fr_forward(model: FrequencyRepresentationNet, samples: np.ndarray, batch: int = 256) -> np.ndarray:
    """Eval-mode representation(s) for complex samples ``[N]`` or ``[B, N]``."""
    single = np.ndim(samples) == 1
    if np.shape(samples)[-1] != model.cfg.n_samples:
        raise ValueError(f"expected {model.cfg.n_samples} samples, got {np.shape(samples)[-1]}")
    out = _batched_eval(model, prepare_input(samples), batch)
    return out[0] if single else out


def counter_forward(model: FrequencyCounterNet, fr: np.ndarray, batch: int = 256) -> np.ndarray:
    """Raw (unrounded) eval-mode count regression for ``[G]`` or ``[B, G]``."""
    single = np.ndim(fr) == 1
    out = _batched_eval(model, np.atleast_2d(np.asarray(fr)), batch)
    return out[0] if single else out


def round_count(raw, m_max: int = 10):
    """Round to the nearest integer and clamp to ``[1, m_max]``."""
    return np.clip(np.rint(raw), 1, m_max).astype(int)


def count_components(model: FrequencyCounterNet, fr: np.ndarray) -> np.ndarray | int:
    counts = round_count(counter_forward(model, fr), model.cfg.m_max)
    return int(counts) if np.ndim(counts) == 0 else counts


def inspect_encoder(model: FrequencyRepresentationNet, grid: Optional[Grid] = None) -> np.ndarray:
    """``|DTFT|`` of every encoder row, shape ``[C, M, G]``."""
    grid = grid or Grid(model.cfg.grid)
    rows = model.encoder_matrices()
    basis = dtft_matrix(model.cfg.n_samples, grid.points)  # [G, N]
    return np.abs(rows @ basis.T)


def diagonal_ordering_score(heat: np.ndarray) -> float:
    """Fraction of consecutive rows whose dominant frequency moves in the
    majority direction, averaged over channels.  Handles the circular
    axis by unwrapping jumps larger than half the grid."""
    scores = []
    G = heat.shape[-1]
    for channel in heat:
        peaks = channel.argmax(axis=1).astype(float)
        steps = np.diff(peaks)
        steps = (steps + G / 2) % G - G / 2
        nonzero = steps[steps != 0]
        if len(steps) == 0:
            continue
        direction = 1.0 if (nonzero > 0).sum() >= (nonzero < 0).sum() else -1.0
        scores.append(float(np.mean(steps * direction > 0)))
    return float(np.mean(scores)) if scores else 0.0
