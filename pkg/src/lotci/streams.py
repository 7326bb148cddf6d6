"""Deterministic random substreams.

Every stream is a Philox generator seeded from ``SeedSequence(master, spawn_key=key)``,
so a substream depends only on its key and never on how many other streams were
drawn before it or on which thread draws it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Streams:
    seed: int
    key: tuple[int, ...] = ()
    frozen: bool = False

    def child(self, *key: int) -> Streams:
        return Streams(self.seed, self.key + tuple(int(k) for k in key), self.frozen)

    def freeze(self) -> Streams:
        """Same substream for every index: common random numbers across try points."""
        return Streams(self.seed, self.key, True)

    def generator(self, index: int = 0) -> np.random.Generator:
        key = self.key if self.frozen else self.key + (int(index),)
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))


def as_streams(rng) -> Streams:
    if isinstance(rng, Streams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Streams(int(rng))
    raise TypeError("rng must be a Streams or an integer seed")
