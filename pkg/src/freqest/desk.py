"""Desk-scale configuration: full architecture, small data, CPU budget.

Models are cached on disk under a digest of every config that shapes
them, so the experiment scripts and the acceptance tests share one
training run.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

from freqest import io
from freqest.nets import CounterConfig, FRNetConfig, ModelBundle
from freqest.signal import GeneratorConfig
from freqest.training import TrainConfig, train_counter, train_fr

log = logging.getLogger(__name__)


@dataclass
class DeskConfig:
    gen: GeneratorConfig = field(default_factory=lambda: GeneratorConfig(m_max=3, sigma_range=(0.0, 0.2), seed=0))
    fr_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            n_signals=2000, epochs=50, batch_size=32, lr=2e-3, sigma_range=(0.0, 0.2), seed=0, augment=True
        )
    )
    counter_train: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            n_signals=2000, epochs=20, batch_size=32, lr=1e-3, sigma_range=(0.0, 0.2), seed=1, augment=True
        )
    )
    fr_net: FRNetConfig = field(default_factory=FRNetConfig)
    counter_net: CounterConfig = field(default_factory=lambda: CounterConfig(m_max=3))

    def to_dict(self) -> dict:
        return {
            "gen": self.gen.to_dict(),
            "fr_train": self.fr_train.to_dict(),
            "counter_train": self.counter_train.to_dict(),
            "fr_net": self.fr_net.to_dict(),
            "counter_net": self.counter_net.to_dict(),
        }

    def digest(self) -> str:
        return hashlib.blake2b(io.canonical_json(self.to_dict()), digest_size=6).hexdigest()


def desk_models(cache_dir, cfg: DeskConfig | None = None) -> tuple[ModelBundle, ModelBundle]:
    """Trained (representation, counter) bundles, loaded from cache if present."""
    cfg = cfg or DeskConfig()
    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    tag = cfg.digest()
    fr_path = cache / f"fr-{tag}.sfrq"
    counter_path = cache / f"counter-{tag}.sfrq"
    if fr_path.exists():
        fr = io.load_model(fr_path)
    else:
        log.info("training desk representation model -> %s", fr_path)
        fr = train_fr(cfg.fr_train, cfg.gen, cfg.fr_net, log_path=cache / f"fr-{tag}.log.jsonl")
        io.save_model(fr_path, fr)
        fr = io.load_model(fr_path)
    if counter_path.exists():
        counter = io.load_model(counter_path)
    else:
        log.info("training desk counter model -> %s", counter_path)
        counter = train_counter(
            cfg.counter_train, fr, cfg.gen, cfg.counter_net, log_path=cache / f"counter-{tag}.log.jsonl"
        )
        io.save_model(counter_path, counter)
        counter = io.load_model(counter_path)
    return fr, counter
