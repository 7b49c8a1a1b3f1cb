"""Kernel backend selection.

The hot inner loops exist twice: numba-compiled (``_kernels_numba``) and
pure NumPy (``_kernels_numpy``). The numba path is the default; set the
environment variable ``CVBIAS_NO_NUMBA=1`` before import to force the
NumPy fallback. Both backends are importable directly for comparison
tests and benchmarks.
"""
import os
import warnings

ENV_FLAG = "CVBIAS_NO_NUMBA"
_TRUTHY = {"1", "true", "yes", "on"}


def numba_disabled(env=None) -> bool:
    env = os.environ if env is None else env
    return str(env.get(ENV_FLAG, "")).strip().lower() in _TRUTHY


if numba_disabled():
    from . import _kernels_numpy as kernels
else:
    try:
        from . import _kernels_numba as kernels
    except ImportError:
        warnings.warn(
            "numba is unavailable; using the slower NumPy kernel path",
            RuntimeWarning,
            stacklevel=2,
        )
        from . import _kernels_numpy as kernels


def backend_name() -> str:
    """Name of the active kernel backend: 'numba' or 'numpy'."""
    return kernels.BACKEND
