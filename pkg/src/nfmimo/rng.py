"""Deterministic seeding and Gaussian sampling.

Every randomized item (scene, noise draw) gets its own generator derived from
a 64-bit base seed and a stream id through SplitMix64 mixing, so outputs are
a pure function of (base_seed, stream) and independent of evaluation order or
thread scheduling. Normal variates come from the Box-Muller transform applied
to the stream's uniforms, which keeps the noise path reproducible from the
documented recipe alone.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One SplitMix64 step (Steele/Lea/Flood constants) of the 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix_seed(base_seed: int, stream: int) -> int:
    """Sub-seed for one logical stream.

    Two chained SplitMix64 rounds decorrelate nearby (base_seed, stream)
    pairs; the result seeds an independent generator per stream.
    """
    return splitmix64(splitmix64(base_seed & _MASK64) ^ (stream & _MASK64))


def stream_rng(base_seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for the given stream of ``base_seed``."""
    return np.random.Generator(np.random.PCG64(mix_seed(base_seed, stream)))


def normal_pairs(gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """n independent standard-normal pairs via Box-Muller.

    Consumes exactly 2n uniforms; u1 is mapped to (0, 1] so the log stays
    finite.
    """
    u1 = 1.0 - gen.random(n)
    u2 = gen.random(n)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def normals(gen: np.random.Generator, n: int) -> np.ndarray:
    """n standard-normal variates (Box-Muller pairs, cos-half first)."""
    g1, g2 = normal_pairs(gen, (n + 1) // 2)
    return np.concatenate([g1, g2])[:n]
