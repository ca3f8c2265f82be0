"""Portable PRNG: xoshiro256** seeded by SplitMix64.

The jitted functions operate on a ``uint64[4]`` state array and are used
inside the simulation kernels; the pure-Python twins (``py_*``) exist for
seed derivation at the Python level and as a test reference.
"""
from __future__ import annotations

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
TWO_M53 = 1.0 / 9007199254740992.0


def py_mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, i: int) -> int:
    """Per-run seed: SplitMix64 finalizer of ``master_seed XOR i``."""
    return py_mix64((int(master_seed) & MASK64) ^ (int(i) & MASK64))


def py_seed_state(seed: int) -> list[int]:
    s = int(seed) & MASK64
    out = []
    for _ in range(4):
        s = (s + GOLDEN) & MASK64
        out.append(py_mix64(s))
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def py_next(state: list[int]) -> int:
    s0, s1, s2, s3 = state
    result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
    t = (s1 << 17) & MASK64
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    state[:] = [s0, s1, s2, s3]
    return result


# --- jitted versions -------------------------------------------------------

_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_UM1 = np.uint64(_M1)
_UM2 = np.uint64(_M2)
_UG = np.uint64(GOLDEN)


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _U30)) * _UM1
    z = (z ^ (z >> _U27)) * _UM2
    return z ^ (z >> _U31)


@nb.njit(cache=True)
def seed_state(seed):
    state = np.empty(4, dtype=np.uint64)
    s = np.uint64(seed)
    for i in range(4):
        s = s + _UG
        state[i] = mix64(s)
    return state


@nb.njit(cache=True, inline="always")
def rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def next_u64(state):
    s1 = state[1]
    result = rotl(s1 * np.uint64(5), 7) * np.uint64(9)
    t = s1 << np.uint64(17)
    state[2] ^= state[0]
    state[3] ^= state[1]
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    state[3] = rotl(state[3], 45)
    return result


@nb.njit(cache=True)
def uniform_open_closed(state):
    """53-bit uniform in (0, 1]."""
    return (np.float64(next_u64(state) >> np.uint64(11)) + 1.0) * TWO_M53


@nb.njit(cache=True)
def uniform_closed_open(state):
    """53-bit uniform in [0, 1)."""
    return np.float64(next_u64(state) >> np.uint64(11)) * TWO_M53


@nb.njit(cache=True)
def derive_seed_jit(master, i):
    return mix64(np.uint64(master) ^ np.uint64(i))
