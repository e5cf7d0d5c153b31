"""Optional numba acceleration.

Hot loops in :mod:`oblimatch.kernels` are written twice: once as a numba
``@njit`` kernel and once as a vectorized numpy routine. The numba path is
used when numba imports cleanly and ``OBLIMATCH_NO_NUMBA`` is unset (or set
to ``0``). Both paths consume identical random inputs, so results agree
bit-for-bit.
"""

from __future__ import annotations

import os

ENV_FLAG = "OBLIMATCH_NO_NUMBA"


def _flag_set() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


NUMBA_DISABLED = _flag_set()

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by " + ENV_FLAG)
    from numba import njit  # type: ignore[import-not-found]

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[no-redef]
        """Identity decorator standing in for ``numba.njit``."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def use_numba(requested: bool | None = None) -> bool:
    """Resolve whether a kernel call should take the numba path."""
    if requested is None:
        return HAVE_NUMBA
    if requested and not HAVE_NUMBA:
        raise RuntimeError("numba path requested but numba is unavailable or disabled")
    return bool(requested)
