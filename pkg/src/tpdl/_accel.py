"""Optional numba acceleration.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` when available. Setting ``TPDL_NUMBA=0`` in the environment
(or running without numba installed) selects the pure-numpy fallback path
instead; each kernel module keeps a vectorized numpy twin for that case.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("TPDL_NUMBA", "1").strip() not in ("0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("error_model", "numpy")
        return numba.njit(*args, cache=True, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
