"""Trilinear hexahedral reference element on the unit cube, 2x2x2 Gauss rule.

Local node ``l = 4a + 2b + c`` sits at corner (a, b, c); the same x-major,
z-fastest ordering is used for Gauss points.
"""
import numpy as np

LOCAL_OFFSETS = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=np.int64)

_G = 0.5 / np.sqrt(3.0)
_G1D = np.array([0.5 - _G, 0.5 + _G])
GAUSS_POINTS = np.array([[_G1D[a], _G1D[b], _G1D[c]] for a, b, c in LOCAL_OFFSETS])
GAUSS_WEIGHT = 1.0 / 8.0


def shape_functions(p):
    """Values (8,) and reference gradients (8, 3) at a point of [0,1]^3."""
    p = np.asarray(p, dtype=float)
    lin = np.stack([1.0 - p, p])             # (2, 3)
    dlin = np.array([[-1.0] * 3, [1.0] * 3])  # (2, 3)
    N = np.empty(8)
    dN = np.empty((8, 3))
    for l, (a, b, c) in enumerate(LOCAL_OFFSETS):
        f = (lin[a, 0], lin[b, 1], lin[c, 2])
        d = (dlin[a, 0], dlin[b, 1], dlin[c, 2])
        N[l] = f[0] * f[1] * f[2]
        dN[l] = (d[0] * f[1] * f[2], f[0] * d[1] * f[2], f[0] * f[1] * d[2])
    return N, dN


SHAPE_AT_GAUSS = np.array([shape_functions(q)[0] for q in GAUSS_POINTS])   # (8q, 8)
GRAD_AT_GAUSS = np.array([shape_functions(q)[1] for q in GAUSS_POINTS])    # (8q, 8, 3)

# engineering Voigt order: 11, 22, 33, 23, 13, 12
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def sym_to_voigt(m):
    """Symmetric part of (..., 3, 3) -> engineering Voigt (..., 6)."""
    s = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.stack([s[..., 0, 0], s[..., 1, 1], s[..., 2, 2],
                     2 * s[..., 1, 2], 2 * s[..., 0, 2], 2 * s[..., 0, 1]], axis=-1)


def voigt_to_sym(v):
    """Engineering Voigt (..., 6) -> symmetric (..., 3, 3)."""
    m = np.empty(v.shape[:-1] + (3, 3))
    m[..., 0, 0], m[..., 1, 1], m[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    m[..., 1, 2] = m[..., 2, 1] = 0.5 * v[..., 3]
    m[..., 0, 2] = m[..., 2, 0] = 0.5 * v[..., 4]
    m[..., 0, 1] = m[..., 1, 0] = 0.5 * v[..., 5]
    return m


def voigt_to_full(C):
    """Voigt (6, 6) tensor -> A_ijkl (3, 3, 3, 3)."""
    A = np.empty((3, 3, 3, 3))
    for I, (i, j) in enumerate(VOIGT_PAIRS):
        for J, (k, l) in enumerate(VOIGT_PAIRS):
            A[i, j, k, l] = A[j, i, k, l] = A[i, j, l, k] = A[j, i, l, k] = C[I, J]
    return A


def strain_matrix(grad):
    """B (6, 24) mapping nodal displacements to engineering strain."""
    B = np.zeros((6, 24))
    for l in range(8):
        gx, gy, gz = grad[l]
        c = 3 * l
        B[0, c] = gx
        B[1, c + 1] = gy
        B[2, c + 2] = gz
        B[3, c + 1], B[3, c + 2] = gz, gy
        B[4, c], B[4, c + 2] = gz, gx
        B[5, c], B[5, c + 1] = gy, gx
    return B


STRAIN_AT_GAUSS = np.array([strain_matrix(g) for g in GRAD_AT_GAUSS])  # (8q, 6, 24)


def vector_stiffness(C, h):
    """Element stiffness (24, 24) of a voxel of side h for Voigt tensor C."""
    B = STRAIN_AT_GAUSS / h
    return np.einsum("qai,ab,qbj->ij", B, C, B) * GAUSS_WEIGHT * h**3


def scalar_stiffness(Ahat, h):
    """Element matrix (8, 8) of the form  ∫ Ahat ∇s · ∇s'."""
    G = GRAD_AT_GAUSS / h
    return np.einsum("qia,ab,qjb->ij", G, Ahat, G) * GAUSS_WEIGHT * h**3


def scalar_mass(h):
    return np.einsum("qi,qj->ij", SHAPE_AT_GAUSS, SHAPE_AT_GAUSS) * GAUSS_WEIGHT * h**3


def voxel_corner_ids(n, periodic=True):
    """Global node ids (n^3, 8) of the corners of every voxel.

    Periodic grids have n^3 nodes (index mod n); box grids (n+1)^3.
    """
    i = np.arange(n)
    I, J, K = np.meshgrid(i, i, i, indexing="ij")
    ids = np.empty((n, n, n, 8), dtype=np.int64)
    m = n if periodic else n + 1
    for l, (a, b, c) in enumerate(LOCAL_OFFSETS):
        ii, jj, kk = I + a, J + b, K + c
        if periodic:
            ii, jj, kk = ii % n, jj % n, kk % n
        ids[..., l] = (ii * m + jj) * m + kk
    return ids.reshape(-1, 8)
