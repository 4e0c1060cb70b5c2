"""Execution backend selection.

Numeric kernels in :mod:`bms.kernels` are written as plain Python over numpy
arrays so that one source serves two execution modes:

* ``numba`` — kernels are compiled with ``numba.njit`` (the default whenever
  numba imports cleanly);
* ``numpy`` — kernels run as interpreted Python (slow but dependency-light,
  useful for debugging and as a reference semantics).

The mode is chosen once at import time from the ``BMS_BACKEND`` environment
variable.  ``python -m bms.backend_bench`` measures the gap between the two.
"""

import os

_VALID = ("numba", "numpy")

_requested = os.environ.get("BMS_BACKEND", "").strip().lower()
if _requested and _requested not in _VALID:
    raise RuntimeError(
        f"BMS_BACKEND={_requested!r} is not recognized; expected one of {_VALID}"
    )

if _requested in ("", "numba"):
    try:
        import numba  # noqa: F401

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False
    if _requested == "numba" and not _HAVE_NUMBA:
        raise RuntimeError("BMS_BACKEND=numba but numba is not importable")
    USE_NUMBA = _HAVE_NUMBA
else:
    USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def maybe_jit(func):
    """Compile ``func`` with numba when the numba backend is active.

    Under the numpy backend this is the identity, so the interpreted
    function keeps its exact Python semantics.
    """
    if USE_NUMBA:
        from numba import njit

        return njit(cache=True)(func)
    return func
