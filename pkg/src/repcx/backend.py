"""Kernel backend selection and worker-thread control.

Hot kernels (pairwise-distance scans, convolution, dense layers) exist in
two implementations: numba @njit kernels and a pure-numpy fallback.  The
environment variable REPCX_BACKEND selects one:

    REPCX_BACKEND=numba   force the numba kernels (error if not installed)
    REPCX_BACKEND=numpy   force the pure-numpy fallback
    unset                 numba when importable, numpy otherwise

Both paths make every tie-sensitive decision on identical sequentially
accumulated float64 values, so results do not depend on the backend.

REPCX_THREADS (or the CLI --threads flag) caps worker parallelism for both
the numba threading layer and the BLAS pool.  Results never depend on the
thread count.
"""

from __future__ import annotations

import os
import warnings

from .errors import ParameterError

try:
    import numba

    # Old system TBB makes numba fall back to its workqueue layer; that is
    # fine, so hide the warning it raises at first kernel launch.
    warnings.filterwarnings(
        "ignore",
        message=".*TBB.*",
        category=numba.core.errors.NumbaWarning,
    )
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    NUMBA_AVAILABLE = False

_ENV_BACKEND = "REPCX_BACKEND"
_ENV_THREADS = "REPCX_THREADS"

# Keep a reference so the BLAS limit outlives configure_threads().
_blas_controller = None


def use_numba() -> bool:
    """True when the numba kernel path is active for this call."""
    choice = os.environ.get(_ENV_BACKEND, "").strip().lower()
    if choice == "":
        return NUMBA_AVAILABLE
    if choice == "numba":
        if not NUMBA_AVAILABLE:
            raise ParameterError("REPCX_BACKEND=numba but numba is not installed")
        return True
    if choice == "numpy":
        return False
    raise ParameterError(f"unknown REPCX_BACKEND value {choice!r} (use numba|numpy)")


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


def default_threads() -> int:
    """Thread count from REPCX_THREADS, else the available core count."""
    env = os.environ.get(_ENV_THREADS, "").strip()
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ParameterError(f"REPCX_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ParameterError("REPCX_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def configure_threads(n: int | None = None) -> int:
    """Cap numba and BLAS worker threads at n (default: default_threads())."""
    global _blas_controller
    if n is None:
        n = default_threads()
    if n < 1:
        raise ParameterError("thread count must be >= 1")
    if NUMBA_AVAILABLE:
        n_numba = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n_numba)
    try:
        from threadpoolctl import threadpool_limits

        _blas_controller = threadpool_limits(limits=n)
    except ImportError:  # pragma: no cover
        pass
    return n
