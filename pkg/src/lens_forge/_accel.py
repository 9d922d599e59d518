"""Backend selection for the numeric kernels.

Every hot kernel in :mod:`lens_forge.kernels` exists twice: a numba ``@njit``
loop version and a vectorised pure-numpy version. The numba path is used when
numba imports cleanly and ``LENS_FORGE_NUMBA`` is not set to ``0``.
Both paths produce the same results to floating point rounding.
"""

import contextlib
import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    NUMBA_AVAILABLE = False

_FALSE = {"0", "false", "no", "off"}

_use_numba = NUMBA_AVAILABLE and os.environ.get("LENS_FORGE_NUMBA", "1").lower() not in _FALSE


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or a no-op without numba."""
    kwargs.setdefault("cache", True)
    if not NUMBA_AVAILABLE:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def use_numba():
    return _use_numba


def backend_name():
    return "numba" if _use_numba else "numpy"


def set_backend(name):
    """Switch between ``"numba"`` and ``"numpy"`` at runtime."""
    global _use_numba
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _use_numba = name == "numba"


@contextlib.contextmanager
def backend(name):
    previous = backend_name()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
