"""Hot-loop kernels: the compiled extension when built, numpy otherwise.

Set ``LORENTZHOM_PURE=1`` to force the numpy implementation.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("LORENTZHOM_PURE") == "1":
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"


def apply_elements(x, dofs, etype, ke, backend=None):
    """Apply a sum of element matrices to ``x`` (shape (ndof,) or (ndof, k)).

    ``dofs[e]`` lists the global indices touched by element ``e`` and
    ``ke[etype[e]]`` is its matrix. Indices must lie in ``[0, ndof)``; the
    compiled kernel does no bounds checking.
    """
    impl = _select(backend)
    vec = x.ndim == 1
    xx = np.ascontiguousarray(x.reshape(x.shape[0], -1), dtype=np.float64)
    out = np.empty_like(xx)
    impl.apply_elements(xx, dofs, etype, ke, out)
    return out[:, 0] if vec else out


def rotate_nodes(v, axis, cos_a, sin_a, backend=None):
    """Rodrigues rotation of the rows of ``v`` in place."""
    _select(backend).rotate_nodes(v, axis, cos_a, sin_a)
    return v


def _select(backend):
    if backend is None:
        return _impl
    if backend == "numpy":
        return _fallback
    if backend == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {backend!r}")
