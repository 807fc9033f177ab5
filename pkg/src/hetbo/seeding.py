"""Counter-based random streams.

Every random draw in an experiment comes from a stream addressed by a tuple
of small integers under one master seed, e.g. ``(seed_index, OBSERVE,
iteration, episode)``.  Streams do not depend on the optimisation method, so
methods compared under the same seed index share pilot data, start point and
episode noise.
"""
from dataclasses import dataclass

import numpy as np

PILOT = 0
OBSERVE = 1
ACQUISITION = 2
CMAES = 3
FIT = 4
EPISODE = 5


@dataclass(frozen=True)
class SeedTree:
    master: int

    def seed_sequence(self, *keys: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.master, spawn_key=tuple(int(k) for k in keys))

    def rng(self, *keys: int) -> np.random.Generator:
        return np.random.default_rng(self.seed_sequence(*keys))

    def child(self, *keys: int) -> "SubTree":
        return SubTree(self, tuple(int(k) for k in keys))


@dataclass(frozen=True)
class SubTree:
    root: SeedTree
    prefix: tuple

    def rng(self, *keys: int) -> np.random.Generator:
        return self.root.rng(*self.prefix, *keys)

    def child(self, *keys: int) -> "SubTree":
        return SubTree(self.root, self.prefix + tuple(int(k) for k in keys))
