# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled path generators.

Mirrors ``_pykernels`` exactly; the constants are those of ``_rng``.  Only
IEEE-exact arithmetic plus libm ``expm1`` is used so both backends agree bit
for bit.
"""

import numpy as np

from libc.math cimport expm1, floor
from libc.stdint cimport int32_t, int64_t, uint64_t

cdef uint64_t SEED_SALT = 0x6A09E667F3BCC909ULL
cdef uint64_t REPLICA_GAMMA = 0x9E3779B97F4A7C15ULL
cdef uint64_t STEP_GAMMA = 0xD1B54A32D192ED03ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double TWO_M52 = 2.220446049250313e-16
cdef double LN2 = 0.6931471805599453


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline uint64_t stream_key(uint64_t seed, uint64_t replica) noexcept nogil:
    return mix64(mix64(seed ^ SEED_SALT) + (replica + 1) * REPLICA_GAMMA)


cdef inline double unit(uint64_t key, uint64_t counter) noexcept nogil:
    cdef uint64_t bits = mix64(key + (counter + 1) * STEP_GAMMA)
    return (<double>(bits >> 12) + 0.5) * TWO_M52


cdef inline int32_t search(const double* cum, Py_ssize_t size, double u) noexcept nogil:
    # first j with u < cum[j]; cum[size - 1] == 1 > u
    cdef Py_ssize_t j = 0
    while j < size - 1 and cum[j] <= u:
        j += 1
    return <int32_t>j


def unit_block(uint64_t seed, Py_ssize_t first, Py_ssize_t count, Py_ssize_t m):
    out = np.empty((count, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, c
    cdef uint64_t key
    with nogil:
        for i in range(count):
            key = stream_key(seed, <uint64_t>(first + i))
            for c in range(m):
                o[i, c] = unit(key, <uint64_t>c)
    return out


def finite_paths(uint64_t seed, Py_ssize_t first, Py_ssize_t count, Py_ssize_t n,
                 const double[::1] cum_init, const double[:, :, ::1] cum_kernels,
                 const int32_t[::1] kernel_of_step):
    out = np.empty((count, n), dtype=np.int32)
    cdef int32_t[:, ::1] o = out
    cdef Py_ssize_t size = cum_init.shape[0]
    cdef Py_ssize_t i, k
    cdef int32_t s
    cdef uint64_t key
    with nogil:
        for i in range(count):
            key = stream_key(seed, <uint64_t>(first + i))
            s = search(&cum_init[0], size, unit(key, 0))
            o[i, 0] = s
            for k in range(1, n):
                s = search(&cum_kernels[kernel_of_step[k], s, 0], size, unit(key, <uint64_t>k))
                o[i, k] = s
    return out


def lazy_paths(uint64_t seed, Py_ssize_t first, Py_ssize_t count, Py_ssize_t n, double stay):
    out = np.empty((count, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, k
    cdef double x, u
    cdef double fresh = 1.0 - stay
    cdef uint64_t key
    with nogil:
        for i in range(count):
            key = stream_key(seed, <uint64_t>(first + i))
            x = unit(key, 0)
            o[i, 0] = x
            for k in range(1, n):
                u = unit(key, <uint64_t>k)
                if u >= stay:
                    x = (u - stay) / fresh
                o[i, k] = x
    return out


def gauss_digits(uint64_t seed, Py_ssize_t first, Py_ssize_t count, Py_ssize_t n,
                 Py_ssize_t burn_in):
    out = np.empty((count, n), dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef Py_ssize_t i, k
    cdef double x, y, d
    cdef uint64_t key, c
    with nogil:
        for i in range(count):
            key = stream_key(seed, <uint64_t>(first + i))
            x = expm1(unit(key, 0) * LN2)
            c = 1
            for k in range(burn_in + n):
                y = 1.0 / x
                d = floor(y)
                x = y - d
                if k >= burn_in:
                    o[i, k - burn_in] = <int64_t>d
                if x == 0.0:
                    x = expm1(unit(key, c) * LN2)
                    c += 1
    return out
