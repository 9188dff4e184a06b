"""Kernel backend selection: numba-jitted loops vs pure-numpy fallbacks.

The env flag KTL_NUMBA controls the default ("0"/"false"/"off" disables JIT).
The numpy backend uses vectorized implementations for the array kernels and
runs the network-simplex pivoting as plain Python (same code, no JIT) -- exact
but slow at production sizes. `benchmarks/bench_kernels.py` compares the two.
"""

import os

_FALSY = ("0", "false", "off", "no")


def _env_default() -> str:
    return "numpy" if os.environ.get("KTL_NUMBA", "1").lower() in _FALSY else "numba"


_active = _env_default()


def set_backend(name):
    """Switch kernel backend at runtime ('numba' or 'numpy')."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    _active = name


def get_backend_name():
    return _active


def get_kernels():
    """Return the module implementing the hot kernels for the active backend."""
    if _active == "numba":
        from kyleot import _kernels_numba as mod
    else:
        from kyleot import _kernels_numpy as mod
    return mod


def set_num_threads(n):
    """Best-effort thread-count control for the numba layer."""
    if n is None or n < 1:
        return
    try:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except Exception:
        pass
