"""JIT selection.

Hot loops in :mod:`metaad.kernels` are compiled with numba when it is
importable.  Setting ``METAAD_DISABLE_NUMBA=1`` forces the pure
Python/numpy path, which is also what runs if numba is missing.
"""
import os

ENV_FLAG = "METAAD_DISABLE_NUMBA"


def _disabled_by_env():
    return os.environ.get(ENV_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


USING_NUMBA = False
if not _disabled_by_env():
    try:
        import numba

        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USING_NUMBA = False


def njit(fn):
    """``numba.njit(cache=True)`` or the identity, depending on the flag."""
    if USING_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn
