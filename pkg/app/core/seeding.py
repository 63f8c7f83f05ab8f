#!/usr/bin/env python3
"""
Seed derivation

Every consumer of randomness gets its own numpy stream, addressed by the run
seed plus a fixed path of integers, so adding draws in one consumer never
shifts another's.
"""

from enum import IntEnum

import numpy as np

SeedLike = int | np.random.SeedSequence


class Stream(IntEnum):
    """First path element of a training run's streams"""

    INIT = 0
    SHUFFLE = 1
    BRANCH = 2
    EVAL = 3


def derive_seed(seed: SeedLike, *path: int) -> np.random.SeedSequence:
    """SeedSequence at `path` below seed; same inputs, same stream"""
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(
        base.entropy, spawn_key=tuple(base.spawn_key) + tuple(int(p) for p in path)
    )


def make_rng(seed: SeedLike, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *path))


def child_seeds(seed: SeedLike, n: int) -> list[np.random.SeedSequence]:
    """n independent children; unlike SeedSequence.spawn, repeatable"""
    return [derive_seed(seed, k) for k in range(n)]


def branch_generators(seed: SeedLike) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams of the T1 and T2 augmentation branches"""
    return make_rng(seed, Stream.BRANCH, 0), make_rng(seed, Stream.BRANCH, 1)
