"""Optional numba acceleration.

Hot kernels are written once and decorated with :func:`njit`.  When numba is
missing, or ``APPROXPART_DISABLE_NUMBA`` is set to a non-empty value other
than ``0``, the decorator is a no-op and callers dispatch to the numpy
fallback paths instead.
"""

import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def _env_disabled():
    return os.environ.get("APPROXPART_DISABLE_NUMBA", "").strip() not in ("", "0")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()

if HAVE_NUMBA:
    njit = numba.njit
else:  # pragma: no cover
    njit = _noop_jit


def resolve_backend(backend=None):
    """Return ``"numba"`` or ``"numpy"`` for an explicit or default request."""
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
