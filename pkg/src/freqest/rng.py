"""Seeded, splittable random streams.

All randomness flows through :func:`stream`, which keys a counter-based
Philox generator by ``(seed, *keys)``.  A record, epoch, or worker gets its
own key, so results never depend on evaluation order or parallelism.
"""

from __future__ import annotations

import numpy as np

# key namespaces, so unrelated consumers of one seed never share a stream
DATASET = 0
TRAIN_NOISE = 1
VALID_NOISE = 2
SHUFFLE = 3
INIT = 4
TEST_SET = 5
PROFILE = 6
AUGMENT = 7


def stream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
