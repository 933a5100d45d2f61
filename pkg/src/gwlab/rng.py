"""Counter-based randomness keyed by genealogical position.

Every vertex of a realized tree owns a 64-bit key derived from its parent's
key and its birth rank, so the random numbers attached to a vertex do not
depend on the order in which the tree is explored.  The scalar functions
operate on Python ints; the ``*_array`` versions operate on ``uint64`` numpy
arrays and return bit-identical values.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_CHILD = 0xD1B54A32D192ED03
_DRAW = 0x8CB92BA72F3D8DD7
_REPLICA = 0xA0761D6478BD642F
_INV52 = 1.0 / (1 << 52)


def mix64(z: int) -> int:
    """splitmix64 finalizer on a Python int."""
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def root_key(seed: int, replica: int = 0) -> int:
    return mix64(mix64(seed & MASK64) ^ ((replica + 1) * _REPLICA & MASK64))


def child_key(key: int, rank: int) -> int:
    return mix64((key + (rank + 1) * _CHILD) & MASK64)


def uniform(key: int, slot: int) -> float:
    """Uniform draw in the open interval (0, 1) attached to ``(key, slot)``."""
    z = mix64(key ^ ((slot + 1) * _DRAW & MASK64))
    return ((z >> 12) + 0.5) * _INV52


# numpy twins -------------------------------------------------------------

_U = np.uint64


def mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + _U(_GOLDEN)
        z = (z ^ (z >> _U(30))) * _U(_M1)
        z = (z ^ (z >> _U(27))) * _U(_M2)
    return z ^ (z >> _U(31))


def child_key_array(keys: np.ndarray, rank: int | np.ndarray) -> np.ndarray:
    rank = np.asarray(rank, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(keys + (rank + _U(1)) * _U(_CHILD))


def uniform_array(keys: np.ndarray, slot: int | np.ndarray) -> np.ndarray:
    slot = np.asarray(slot, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = mix64_array(keys ^ ((slot + _U(1)) * _U(_DRAW)))
    return ((z >> _U(12)).astype(np.float64) + 0.5) * _INV52
