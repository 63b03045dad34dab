"""Counter-based random streams (numpy Philox).

Every draw is addressed by (seed, purpose, step): the Philox key encodes
(seed, purpose tag) and the 256-bit counter starts at step * 2**128, leaving
2**128 blocks per step so draws inside one step never collide with another
step. Streams are therefore reproducible without replaying history and
independent across ensemble members, which is what makes batched runs and
thread scheduling bit-stable.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

TAG_INIT = 0      # initial-condition sampling
TAG_STEP = 1      # per-step Brownian increments
TAG_PROBE = 2     # auxiliary draws (test probes, scrambles)


def philox_generator(seed: int, tag: int, step: int = 0) -> np.random.Generator:
    """Generator positioned at counter block ``step * 2**128`` of stream (seed, tag)."""
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    bg = np.random.Philox(key=key, counter=int(step) << 128)
    return np.random.Generator(bg)


class CounterStream:
    """Per-member stream handing out step-addressed normal/uniform blocks."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def normals(self, step: int, shape) -> np.ndarray:
        return philox_generator(self.seed, TAG_STEP, step).standard_normal(shape)

    def uniforms(self, step: int, shape) -> np.ndarray:
        return philox_generator(self.seed, TAG_STEP, step).random(shape)

    def init_generator(self) -> np.random.Generator:
        return philox_generator(self.seed, TAG_INIT)
