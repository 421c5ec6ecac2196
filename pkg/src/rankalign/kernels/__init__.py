"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time from the ``RANKALIGN_BACKEND``
environment variable:

* unset or ``auto`` -- numba when importable, numpy otherwise;
* ``numba``         -- require numba, fail loudly if unavailable;
* ``numpy``         -- force the pure-numpy fallback.

``benchmarks/bench_kernels.py`` compares the two implementations.
"""

import os

_requested = os.environ.get("RANKALIGN_BACKEND", "auto").strip().lower() or "auto"
if _requested not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"RANKALIGN_BACKEND must be 'auto', 'numba' or 'numpy', got {_requested!r}")

if _requested == "numpy":
    from rankalign.kernels import numpy_backend as _backend
else:
    try:
        from rankalign.kernels import numba_backend as _backend
    except ImportError:
        if _requested == "numba":
            raise
        from rankalign.kernels import numpy_backend as _backend

BACKEND = _backend.NAME
hinge_loss_grad = _backend.hinge_loss_grad
adam_update = _backend.adam_update
pooled_icc_two_raters = _backend.pooled_icc_two_raters
pooled_icc_resample = _backend.pooled_icc_resample

__all__ = [
    "BACKEND",
    "hinge_loss_grad",
    "adam_update",
    "pooled_icc_two_raters",
    "pooled_icc_resample",
]
