"""Pure numpy path generators, bit-compatible with ``_ckernels``."""

from __future__ import annotations

import math

import numpy as np

from . import _rng

LN2 = 0.6931471805599453


def unit_block(seed: int, first: int, count: int, m: int) -> np.ndarray:
    return _rng.unit_block(seed, first, count, m)


def finite_paths(seed, first, count, n, cum_init, cum_kernels, kernel_of_step):
    u = _rng.unit_block(seed, first, count, n)
    size = cum_init.shape[0]
    out = np.empty((count, n), dtype=np.int32)
    # count of cumulative entries <= u, capped: same as the linear scan
    s = np.minimum(np.count_nonzero(cum_init[None, :] <= u[:, :1], axis=1), size - 1)
    out[:, 0] = s
    for k in range(1, n):
        rows = cum_kernels[kernel_of_step[k]][s]
        s = np.minimum(np.count_nonzero(rows <= u[:, k : k + 1], axis=1), size - 1)
        out[:, k] = s
    return out


def lazy_paths(seed, first, count, n, stay):
    u = _rng.unit_block(seed, first, count, n)
    fresh = 1.0 - stay
    moved = u >= stay
    moved[:, 0] = True
    draws = (u - stay) / fresh
    draws[:, 0] = u[:, 0]
    # forward-fill the last resampling time
    idx = np.where(moved, np.arange(n)[None, :], 0)
    np.maximum.accumulate(idx, axis=1, out=idx)
    return np.take_along_axis(draws, idx, axis=1)


def _inverse_gauss_cdf(u: np.ndarray) -> np.ndarray:
    # libm expm1, scalar by scalar, to match the compiled kernel
    return np.array([math.expm1(v) for v in (u * LN2).tolist()], dtype=np.float64)


def gauss_digits(seed, first, count, n, burn_in):
    keys = _rng.stream_keys(seed, first, count)
    x = _inverse_gauss_cdf(_rng.units(keys, np.zeros(count, dtype=np.uint64)))
    counters = np.ones(count, dtype=np.uint64)
    out = np.empty((count, n), dtype=np.int64)
    for k in range(burn_in + n):
        y = 1.0 / x
        d = np.floor(y)
        x = y - d
        if k >= burn_in:
            out[:, k - burn_in] = d.astype(np.int64)
        hit = np.flatnonzero(x == 0.0)
        if hit.size:
            x[hit] = _inverse_gauss_cdf(_rng.units(keys[hit], counters[hit]))
            counters[hit] += np.uint64(1)
    return out
