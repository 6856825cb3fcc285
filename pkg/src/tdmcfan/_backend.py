"""Kernel backend selection.

Hot loops exist twice: a numba ``@njit`` version and a vectorised numpy
version. ``TDMCFAN_BACKEND=numpy`` forces the numpy path; otherwise numba is
used when it imports. Both paths draw from the same counter-based RNG, so
they produce the same numbers up to libm rounding.
"""

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
BACKENDS = ("numba", "numpy")


def default_backend():
    flag = os.environ.get("TDMCFAN_BACKEND", "numba").strip().lower()
    if flag not in BACKENDS:
        raise ValueError(f"TDMCFAN_BACKEND must be one of {BACKENDS}, got {flag!r}")
    if flag == "numba" and not HAVE_NUMBA:
        return "numpy"
    return flag


def resolve(backend=None):
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**kwargs)(f)

    if fn is not None:
        return wrap(fn)
    return wrap
