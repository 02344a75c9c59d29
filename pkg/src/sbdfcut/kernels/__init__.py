"""Hot numeric kernels with a numba path and a pure-NumPy fallback.

The backend is chosen once at import time from the ``SBDFCUT_BACKEND``
environment variable (``numba`` or ``numpy``).  When unset, numba is used if it
imports cleanly.  Both modules expose the same functions:

``eval_poly(coef, ids, xi, k)``
    Evaluate per-item monomial polynomials ``coef[ids[i]]`` at ``xi[i]``.
``eval_poly_jac(coef, ids, xi, k)``
    Values and Jacobians ``d x_i / d xi_j`` of 2-vector polynomials.
``invert_maps(coef, kinds, ptr, cand, points, k, tol, tol_in, maxit)``
    Newton inversion of isoparametric maps over CSR candidate lists.
``closest_on_edges(coef, ptr, cand, points, k, maxit)``
    Closest point on the ``xi2 = 0`` edge of candidate maps.
"""

import os

from . import _numpy

BACKEND = os.environ.get("SBDFCUT_BACKEND", "").strip().lower() or "numba"

if BACKEND == "numba":
    try:
        from . import _numba as _impl
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
        _impl = _numpy
elif BACKEND == "numpy":
    _impl = _numpy
else:
    raise ValueError(f"unknown SBDFCUT_BACKEND {BACKEND!r}; use 'numba' or 'numpy'")

eval_poly = _impl.eval_poly
eval_poly_jac = _impl.eval_poly_jac
invert_maps = _impl.invert_maps
closest_on_edges = _impl.closest_on_edges

__all__ = [
    "BACKEND",
    "eval_poly",
    "eval_poly_jac",
    "invert_maps",
    "closest_on_edges",
]
