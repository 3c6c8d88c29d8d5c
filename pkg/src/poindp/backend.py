"""Kernel backend selection.

Hot inner loops (embedding SGD, hyperbolicity quadruple scans) ship in two
flavours: numba-jitted and pure numpy. The active backend is chosen once at
import time from the ``POINDP_BACKEND`` environment variable:

    POINDP_BACKEND=numba   force jitted kernels (error if numba is missing)
    POINDP_BACKEND=numpy   force the pure-numpy fallback

Unset, numba is used when importable. ``poindp bench`` times both paths.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via POINDP_BACKEND=numpy
    numba = None
    HAS_NUMBA = False

_ENV_VAR = "POINDP_BACKEND"
_VALID = ("numba", "numpy")


def _resolve_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice and choice not in _VALID:
        raise ValueError(
            f"{_ENV_VAR}={choice!r} not understood; expected one of {_VALID}"
        )
    if choice == "numba" and not HAS_NUMBA:
        raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
    if not choice:
        choice = "numba" if HAS_NUMBA else "numpy"
    return choice


BACKEND = _resolve_backend()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND


def use_numba() -> bool:
    return BACKEND == "numba"


def maybe_njit(func=None, **options):
    """Apply ``numba.njit`` when the numba backend is active, else no-op.

    Used for kernels whose pure-Python body doubles as the numpy fallback.
    """
    options.setdefault("cache", True)

    def wrap(f):
        if use_numba():
            return numba.njit(**options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap


def jit_always(func=None, **options):
    """Unconditionally jit (used where a separate numpy fallback exists)."""
    options.setdefault("cache", True)

    def wrap(f):
        if HAS_NUMBA:
            return numba.njit(**options)(f)
        return f

    if func is not None:
        return wrap(func)
    return wrap
