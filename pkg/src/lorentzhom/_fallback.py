"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""
import numpy as np


def apply_elements(x, dofs, etype, ke, out):
    ndof, ncol = x.shape
    xe = x[dofs]  # (ne, nd, ncol)
    if ke.shape[0] == dofs.shape[0] and ke.shape[0] > 8:
        fe = np.einsum("eij,ejc->eic", ke[etype], xe)
    else:
        fe = np.empty_like(xe)
        for t in np.unique(etype):
            sel = etype == t
            fe[sel] = np.einsum("ij,ejc->eic", ke[t], xe[sel])
    flat = dofs.ravel()
    for c in range(ncol):
        out[:, c] = np.bincount(flat, weights=fe[:, :, c].ravel(), minlength=ndof)


def rotate_nodes(v, axis, cos_a, sin_a):
    c = cos_a[:, None]
    s = sin_a[:, None]
    kv = np.einsum("ij,ij->i", axis, v)[:, None] * (1.0 - c)
    w = v * c + np.cross(axis, v) * s + axis * kv
    # restore the norm lost to rounding in the rotation coefficients
    n0 = np.einsum("ij,ij->i", v, v)
    n1 = np.einsum("ij,ij->i", w, w)
    scale = np.sqrt(np.divide(n0, n1, out=np.ones_like(n0), where=n1 > 0))
    v[:] = w * scale[:, None]
