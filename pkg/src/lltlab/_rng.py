"""Counter-based uniform streams.

Every draw is a pure function of ``(master_seed, replica, counter)``: the
replica key is a hashed seed/replica pair and the draw is the SplitMix64
output at position ``counter`` of the stream rooted at that key.  Nothing is
carried between replicas, so any partition of replicas over workers yields
the same numbers.

The compiled kernels in ``_ckernels.pyx`` implement the same arithmetic and
must stay in sync with the constants below.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
SEED_SALT = 0x6A09E667F3BCC909
REPLICA_GAMMA = 0x9E3779B97F4A7C15
STEP_GAMMA = 0xD1B54A32D192ED03
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
TWO_M52 = 2.0**-52


def mix64_int(z: int) -> int:
    """SplitMix64 finalizer on a Python int (reference implementation)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def stream_key_int(seed: int, replica: int) -> int:
    return mix64_int(mix64_int(seed ^ SEED_SALT) + (replica + 1) * REPLICA_GAMMA)


def unit_int(key: int, counter: int) -> float:
    """Uniform on the open interval (0, 1) from 52 hashed bits."""
    bits = mix64_int(key + (counter + 1) * STEP_GAMMA)
    return ((bits >> 12) + 0.5) * TWO_M52


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def stream_keys(seed: int, first: int, count: int) -> np.ndarray:
    """Keys for replicas ``first .. first + count - 1``."""
    check_seed(seed)
    with np.errstate(over="ignore"):
        root = _mix64(np.array([seed ^ SEED_SALT], dtype=np.uint64))[0]
        r = np.arange(first + 1, first + count + 1, dtype=np.uint64)
        return _mix64(root + r * np.uint64(REPLICA_GAMMA))


def units(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Broadcast ``unit`` over key and counter arrays."""
    with np.errstate(over="ignore"):
        c = np.asarray(counters, dtype=np.uint64) + np.uint64(1)
        bits = _mix64(keys + c * np.uint64(STEP_GAMMA))
    return ((bits >> np.uint64(12)).astype(np.float64) + 0.5) * TWO_M52


def unit_block(seed: int, first: int, count: int, m: int) -> np.ndarray:
    """``(count, m)`` matrix of draws with counters ``0 .. m - 1``."""
    keys = stream_keys(seed, first, count)
    return units(keys[:, None], np.arange(m, dtype=np.uint64)[None, :])


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or not 0 <= int(seed) <= MASK64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return int(seed)
