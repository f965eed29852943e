"""Seeded sampling primitives shared by every sketch.

Two building blocks: per-level Bernoulli subsampling with keep-smallest
retention (LevelSampleBank) and size-1 reservoir sampling (Reservoir1).
All randomness is derived from a counter-based generator keyed by
(seed, domain tags), so identical seed + identical offer sequence replays
byte-for-byte, independent of chunking.
"""

from __future__ import annotations

import hashlib
import random
import struct

import numpy as np


def _digest(seed: int, *tags) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", int(seed) & (2**64 - 1)))
    for t in tags:
        if isinstance(t, str):
            h.update(b"s" + t.encode())
        else:
            h.update(b"i" + struct.pack("<Q", int(t) & (2**64 - 1)))
    return h.digest()


def philox_generator(seed: int, *tags) -> np.random.Generator:
    """Independent numpy generator for the (seed, tags) domain."""
    key = np.frombuffer(_digest(seed, *tags), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *tags) -> int:
    """64-bit integer seed for the (seed, tags) domain (for random.Random)."""
    return int.from_bytes(_digest(seed, *tags)[:8], "little")


class LevelSampleBank:
    """Parallel keep-smallest sample buffers at rates 1/2^i, i = 0..L-1.

    Each offered value passes an independent Bernoulli(2^-i) trial per level
    (one generator per level, disjoint by construction); survivors enter a
    buffer that retains the ``capacity`` smallest surviving values, evicting
    the largest on overflow.  Level 0 keeps every value until capacity.

    ``nested=True`` switches to a single coin per element shared across
    levels (value survives level i iff u < 2^-i), a space optimization that
    trades away cross-level independence; off by default.
    """

    def __init__(
        self,
        capacity: int,
        num_levels: int,
        seed: int = 0,
        domain: str = "bank",
        nested: bool = False,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if num_levels < 1:
            raise ValueError("num_levels must be >= 1")
        self.capacity = int(capacity)
        self.num_levels = int(num_levels)
        self.seed = int(seed)
        self.domain = domain
        self.nested = nested
        self.offered = 0
        self.survived = [0] * num_levels
        self.buffers: list[np.ndarray] = [
            np.empty(0, dtype=np.float64) for _ in range(num_levels)
        ]
        if nested:
            self._gens = [philox_generator(seed, domain, "shared")]
        else:
            self._gens = [philox_generator(seed, domain, i) for i in range(num_levels)]

    def rate(self, level: int) -> float:
        return 2.0 ** (-level)

    def offer(self, x: float) -> None:
        self.offer_many(np.asarray([x], dtype=np.float64))

    def offer_many(self, xs: np.ndarray) -> None:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0:
            return
        self.offered += int(xs.size)
        shared = self._gens[0].random(xs.size) if self.nested else None
        for i in range(self.num_levels):
            if i == 0:
                surv = xs
            else:
                u = shared if self.nested else self._gens[i].random(xs.size)
                surv = xs[u < self.rate(i)]
            if surv.size == 0:
                continue
            self.survived[i] += int(surv.size)
            merged = np.concatenate([self.buffers[i], surv])
            merged.sort(kind="stable")
            self.buffers[i] = merged[: self.capacity]

    def retained(self) -> int:
        return int(sum(b.size for b in self.buffers))

    def state_bytes(self) -> bytes:
        parts = [struct.pack("<qq", self.offered, self.capacity)]
        for i, b in enumerate(self.buffers):
            parts.append(struct.pack("<qq", i, b.size))
            parts.append(b.tobytes())
        return b"".join(parts)


class Reservoir1:
    """Uniform size-1 reservoir: after k offers each value is retained w.p. 1/k."""

    __slots__ = ("count_seen", "sample", "_rng")

    def __init__(self, seed: int = 0, rng: random.Random | None = None):
        self.count_seen = 0
        self.sample = None
        self._rng = rng if rng is not None else random.Random(seed)

    def offer(self, value) -> None:
        self.count_seen += 1
        if self.count_seen == 1:
            self.sample = value
        elif self._rng.random() * self.count_seen < 1.0:
            self.sample = value
