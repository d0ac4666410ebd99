"""Numba switch.

Kernels in :mod:`msdi.kernels` come in two flavours: a compiled loop version and
a vectorised numpy version. ``MSDI_NUMBA=0`` in the environment (read at import
time) routes the dispatchers to the numpy path; numba being absent does the same.
Frank inversion is dispatched to numpy either way, as it benchmarks faster.
"""

import os

_FLAG = os.environ.get("MSDI_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
}


def njit(func):
    """Compile ``func`` lazily with the default options, or return it unchanged."""
    if numba is None:
        return func
    return numba.njit(**numba_default)(func)
