# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled element kernels.

Both routines walk elements (resp. nodes) in index order so results are
reproducible bit-for-bit for a fixed input.
"""
import numpy as np

from libc.math cimport sqrt


def apply_elements(const double[:, ::1] x, const long long[:, ::1] dofs,
                   const long long[::1] etype, const double[:, :, ::1] ke,
                   double[:, ::1] out):
    """out = sum_e P_e^T Ke[etype[e]] P_e x for every column of x."""
    cdef Py_ssize_t ne = dofs.shape[0], nd = dofs.shape[1]
    cdef Py_ssize_t ncol = x.shape[1]
    cdef Py_ssize_t e, i, j, c, t
    cdef double acc
    cdef double[:, ::1] xe = np.empty((nd, ncol))
    out[:, :] = 0.0
    if ncol == 1 and nd <= 64:
        _apply_single(x, dofs, etype, ke, out)
        return
    for e in range(ne):
        t = etype[e]
        for j in range(nd):
            for c in range(ncol):
                xe[j, c] = x[dofs[e, j], c]
        for i in range(nd):
            for c in range(ncol):
                acc = 0.0
                for j in range(nd):
                    acc = acc + ke[t, i, j] * xe[j, c]
                out[dofs[e, i], c] += acc


cdef void _apply_single(const double[:, ::1] x, const long long[:, ::1] dofs,
                        const long long[::1] etype, const double[:, :, ::1] ke,
                        double[:, ::1] out) noexcept nogil:
    """Single right-hand side: element values kept in a stack buffer."""
    cdef Py_ssize_t ne = dofs.shape[0], nd = dofs.shape[1]
    cdef Py_ssize_t e, i, j
    cdef double xe[64]
    cdef double acc
    cdef const double* k
    cdef const long long* d
    for e in range(ne):
        d = &dofs[e, 0]
        k = &ke[etype[e], 0, 0]
        for j in range(nd):
            xe[j] = x[d[j], 0]
        for i in range(nd):
            acc = 0.0
            for j in range(nd):
                acc = acc + k[i * nd + j] * xe[j]
            out[d[i], 0] += acc


def rotate_nodes(double[:, ::1] v, const double[:, ::1] axis,
                 const double[::1] cos_a, const double[::1] sin_a):
    """Rotate each row of v in place about the unit axis by the given angle."""
    cdef Py_ssize_t n = v.shape[0], i
    cdef double kx, ky, kz, vx, vy, vz, c, s, kv, cx, cy, cz, n0, n1, wx, wy, wz, scale
    for i in range(n):
        kx = axis[i, 0]
        ky = axis[i, 1]
        kz = axis[i, 2]
        vx = v[i, 0]
        vy = v[i, 1]
        vz = v[i, 2]
        c = cos_a[i]
        s = sin_a[i]
        kv = (kx * vx + ky * vy + kz * vz) * (1.0 - c)
        cx = ky * vz - kz * vy
        cy = kz * vx - kx * vz
        cz = kx * vy - ky * vx
        wx = vx * c + cx * s + kx * kv
        wy = vy * c + cy * s + ky * kv
        wz = vz * c + cz * s + kz * kv
        # restore the norm lost to rounding in the rotation coefficients
        n0 = vx * vx + vy * vy + vz * vz
        n1 = wx * wx + wy * wy + wz * wz
        scale = sqrt(n0 / n1) if n1 > 0.0 else 1.0
        v[i, 0] = wx * scale
        v[i, 1] = wy * scale
        v[i, 2] = wz * scale
