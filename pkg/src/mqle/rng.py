"""Deterministic seeding utilities.

Every stochastic stage derives its seed from the pipeline seed through
``child_seed``, so artifacts reproduce bit-for-bit no matter which stages
run or in what order. The SplitMix64 generator here is mirrored line-for-line
by the compiled kernels; both paths draw identical streams.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1

# 2**-53, exact in IEEE double
_U53 = 1.0 / 9007199254740992.0


def child_seed(seed: int, label: str) -> int:
    """Stable 63-bit child seed for a named stage."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def generator(seed: int, label: str) -> np.random.Generator:
    """Seeded numpy generator for a named stage."""
    return np.random.default_rng(child_seed(seed, label))


class SplitMix64:
    """Minimal deterministic PRNG shared with the kernel extension."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * _U53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n); modulo bias is negligible for n << 2**64."""
        return self.next_u64() % n
