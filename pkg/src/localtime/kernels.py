"""Hot loops behind the block-map machinery.

Two kernels carry almost all the arithmetic in this package:

``schur_apply(rho, level_of, coeff)``
    Entry-wise product ``coeff[level_of[i], level_of[j]] * rho[i, j]`` for a
    matrix written in a level-adapted basis. This is how every block
    coefficient map acts on a state.
``phase_sum(times, freqs, weights)``
    ``out[a, p] = sum_k weights[p, k] * exp(-1j * times[a] * freqs[p, k])``.
    Coherence factors, time averages and cosine criteria over long time grids
    are all instances of it.

The compiled Cython module is used when it was built; otherwise (or when
``LOCALTIME_PURE_PYTHON`` is set) the numpy versions are used. ``BACKEND``
names the active one.
"""

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("LOCALTIME_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "python"

__all__ = ["BACKEND", "schur_apply", "phase_sum", "available_backends", "get_backend"]


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "cython")
    return names


def get_backend(name):
    """Return the kernel module for ``name`` ('cython' or 'python')."""
    if name == "python":
        return _kernels_py
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"kernel backend {name!r} is not available")


def schur_apply(rho, level_of, coeff):
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    level_of = np.ascontiguousarray(level_of, dtype=np.intp)
    coeff = np.ascontiguousarray(coeff, dtype=np.complex128)
    return _impl.schur_apply(rho, level_of, coeff)


def phase_sum(times, freqs, weights):
    times = np.ascontiguousarray(np.atleast_1d(times), dtype=np.float64)
    freqs = np.ascontiguousarray(np.atleast_2d(freqs), dtype=np.float64)
    weights = np.ascontiguousarray(np.broadcast_to(weights, freqs.shape), dtype=np.float64)
    return _impl.phase_sum(times, freqs, weights)
