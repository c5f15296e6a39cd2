"""Deterministic parameter initialization on a splitmix64 stream.

The generator is specified to the bit so checkpoints and tests are
reproducible across platforms:

    state_i = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = state_i
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB   mod 2**64
    z = z ^ (z >> 31)

The i-th draw in [0, 1) is (z >> 11) * 2**-53.
"""

from __future__ import annotations

import math
import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """First n splitmix64 outputs for the given seed, as uint64."""
    idx = np.arange(1, n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def uniform01(seed: int, n: int) -> np.ndarray:
    """n doubles in [0, 1) drawn deterministically from the seed."""
    return (splitmix64_stream(seed, n) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(seed: int, name: str) -> int:
    """Stable per-parameter subseed; crc32 keeps it platform-independent."""
    return (seed * 0x100000001B3 + zlib.crc32(name.encode("utf-8"))) & 0xFFFFFFFFFFFFFFFF


def _fans(shape: tuple[int, ...]) -> tuple[int, int]:
    if len(shape) == 1:
        return shape[0], shape[0]
    # rank 2: (in, out); rank 3: leading axis indexes independent matrices
    return shape[-2], shape[-1]


def seeded_init(shape: tuple[int, ...], seed: int, scheme: str = "uniform_scaled") -> np.ndarray:
    """Deterministic tensor init; uniform_scaled is U(-s, s) with
    s = sqrt(6 / (fan_in + fan_out))."""
    size = int(np.prod(shape)) if shape else 1
    if scheme == "zeros":
        return np.zeros(shape, dtype=np.float64)
    if scheme == "uniform_scaled":
        fan_in, fan_out = _fans(tuple(shape))
        s = math.sqrt(6.0 / (fan_in + fan_out))
        u = uniform01(seed, size)
        return ((u * 2.0 - 1.0) * s).reshape(shape)
    raise ValueError(f"unknown init scheme: {scheme!r}")
