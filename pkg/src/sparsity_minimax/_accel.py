"""Backend switch for the hot loops.

Numba is used when importable unless ``SPARSITY_MINIMAX_NUMBA=0`` is set in
the environment. Every accelerated routine has a pure-numpy twin with the
same signature so results can be compared directly.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SPARSITY_MINIMAX_NUMBA", "1") != "0"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    return func


def pick(nb_impl, np_impl):
    return nb_impl if USE_NUMBA else np_impl
