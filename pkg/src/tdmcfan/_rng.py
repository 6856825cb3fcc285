"""Counter-based random streams.

Every random number is a pure function of a 64-bit stream key and a 64-bit
counter, hashed with the SplitMix64 finaliser. Particles and excursions carry
their own key, and child keys are derived from the parent key and a
(step, index) pair, so a population can be processed in any order and still
see the same draws. The same functions run on numpy arrays and, compiled,
inside numba kernels.
"""

import numpy as np

from ._backend import njit

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_CHILD_SALT = np.uint64(0xD1B54A32D192ED03)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S32 = np.uint64(32)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


def mix64(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)


def counter(step, slot):
    return (step << _S32) | slot


def uniform(key, ctr):
    """Uniform on the open interval (0, 1)."""
    with np.errstate(over="ignore"):
        z = mix64(key ^ mix64(ctr + _GOLDEN))
    return ((z >> _S11) + 0.5) * _INV53


def child_key(key, step, index):
    with np.errstate(over="ignore"):
        return mix64(mix64(key + _CHILD_SALT) ^ mix64(counter(step, index) ^ _GOLDEN))


# Compiled twins; numba cannot call the plain functions above.
@njit
def mix64_nb(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def counter_nb(step, slot):
    return (np.uint64(step) << _S32) | np.uint64(slot)


@njit
def uniform_nb(key, ctr):
    z = mix64_nb(key ^ mix64_nb(ctr + _GOLDEN))
    return ((z >> _S11) + 0.5) * _INV53


@njit
def child_key_nb(key, step, index):
    return mix64_nb(mix64_nb(key + _CHILD_SALT) ^ mix64_nb(counter_nb(step, index) ^ _GOLDEN))


def _u64(value):
    return np.asarray(value, dtype=np.uint64)


def key_from(seed, *path):
    """Derive a stream key from a seed and a path of non-negative integers."""
    with np.errstate(over="ignore"):
        k = mix64(_u64([int(seed) & MASK64]))
        for i, p in enumerate(path):
            k = child_key(k, _u64([i]), _u64([int(p) & MASK64]))
    return int(k[0])


def keys_for(root_key, n, step=0):
    """Child keys ``child_key(root, step, i)`` for ``i < n`` as a uint64 array."""
    idx = np.arange(n, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return child_key(_u64(root_key), _u64(step), idx)


class RngStream:
    """A keyed stream with a sequential counter for one-off draws.

    Kernels never use the counter; they read ``key`` and address draws
    explicitly. ``generator()`` hands out a numpy Generator for plumbing
    that needs the full distribution zoo.
    """

    def __init__(self, seed, path=()):
        self.seed = int(seed) & MASK64
        self.path = tuple(int(p) for p in path)
        self.key = key_from(self.seed, *self.path)
        self._counter = 0

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"

    def child(self, *path):
        return RngStream(self.seed, self.path + tuple(path))

    def random(self, n=None):
        m = 1 if n is None else int(n)
        ctr = np.arange(self._counter, self._counter + m, dtype=np.uint64)
        self._counter += m
        with np.errstate(over="ignore"):
            u = uniform(_u64(self.key), ctr)
        return float(u[0]) if n is None else u

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence([self.key & 0xFFFFFFFF, self.key >> 32, *self.path]))
