"""Matrix-free voxel finite-element operators on the unit cell."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConfigError, ConvergenceError, FieldError
from .fem import (
    GAUSS_WEIGHT,
    GRAD_AT_GAUSS,
    SHAPE_AT_GAUSS,
    sym_to_voigt,
    vector_stiffness,
    voigt_to_full,
    voxel_corner_ids,
)
from .unitcell import CellGeometry, SampledField, _gather_nodes

_MANDEL = np.diag([1.0, 1.0, 1.0, 1 / np.sqrt(2), 1 / np.sqrt(2), 1 / np.sqrt(2)])


@dataclass(frozen=True)
class ElasticTensor:
    """Symmetric elasticity tensor in engineering Voigt form (6x6)."""

    voigt: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.voigt, dtype=float)
        if C.shape != (6, 6):
            raise ConfigError("elastic tensor must be 6x6 in Voigt form")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12 * np.abs(C).max()):
            raise ConfigError("elastic tensor lacks major symmetry")
        object.__setattr__(self, "voigt", C)
        if self.ellipticity <= 0:
            raise ConfigError(f"elastic tensor is not elliptic (constant {self.ellipticity:.3g})")

    @classmethod
    def isotropic(cls, lam, mu):
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] = lam + 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return cls(C)

    @classmethod
    def from_config(cls, cfg):
        if "voigt" in cfg:
            return cls(np.asarray(cfg["voigt"], dtype=float))
        if "lambda" in cfg and "mu" in cfg:
            return cls.isotropic(float(cfg["lambda"]), float(cfg["mu"]))
        raise ConfigError("tensor needs 'voigt' (6x6) or 'lambda' and 'mu'")

    @property
    def ellipticity(self):
        """Largest a with A M:M >= a M:M on symmetric matrices."""
        Minv = np.linalg.inv(_MANDEL)
        return float(np.linalg.eigvalsh(Minv @ self.voigt @ Minv).min())

    def full(self):
        """The 3x3x3x3 array A_ijkl."""
        return voigt_to_full(self.voigt)

    def directional(self, xi):
        return directional_matrix(self.voigt, xi)

    def scaled(self, c):
        return ElasticTensor(c * self.voigt)


def directional_matrix(C, xi):
    """Matrix of ζ ↦ A(ζ⊙ξ)ξ for the Voigt tensor C."""
    E = np.array([sym_to_voigt(0.5 * (np.outer(e, xi) + np.outer(xi, e))) for e in np.eye(3)])
    return E @ C @ E.T


@dataclass
class ElementOperator:
    """Sum of element matrices over a voxel set; applied matrix-free.

    Entries of ``dofs`` equal to -1 are constrained (Dirichlet) and dropped.
    """

    dofs: np.ndarray
    etype: np.ndarray
    ke: np.ndarray
    ndof: int
    symmetric: bool = True
    kind: str = ""
    backend: str | None = None
    _pdofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.dofs = np.ascontiguousarray(self.dofs, dtype=np.int64)
        self.etype = np.ascontiguousarray(self.etype, dtype=np.int64)
        self.ke = np.ascontiguousarray(self.ke, dtype=np.float64)
        self._pdofs = np.where(self.dofs < 0, self.ndof, self.dofs)

    @property
    def shape(self):
        return (self.ndof, self.ndof)

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        xp = np.zeros((self.ndof + 1,) + x.shape[1:])
        xp[: self.ndof] = x
        y = kernels.apply_elements(xp, self._pdofs, self.etype, self.ke, backend=self.backend)
        return y[: self.ndof]

    __matmul__ = apply

    def diagonal(self):
        d = np.einsum("tii->ti", self.ke)[self.etype]
        out = np.bincount(self._pdofs.ravel(), weights=d.ravel(), minlength=self.ndof + 1)
        return out[: self.ndof]

    def to_sparse(self):
        ne, nd = self.dofs.shape
        rows = np.repeat(self._pdofs, nd, axis=1).ravel()
        cols = np.tile(self._pdofs, (1, nd)).ravel()
        vals = self.ke[self.etype].reshape(ne, -1).ravel()
        keep = (rows < self.ndof) & (cols < self.ndof)
        A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=self.shape).tocsr()
        A.sum_duplicates()
        return A

    def as_linear_operator(self):
        return sp.linalg.LinearOperator(self.shape, matvec=self.apply, matmat=self.apply, dtype=float)


# --------------------------------------------------------------------------
# periodic elasticity on Y1


@dataclass
class PeriodicSpace:
    """Periodic nodes carrying Y1 unknowns (3 per node) and their lumped volumes."""

    nodes: np.ndarray       # global periodic node ids, sorted
    node_volume: np.ndarray  # ∫_{Y1} φ_l
    n: int

    @property
    def ndof(self):
        return 3 * self.nodes.size

    def translations(self):
        """Euclidean-orthonormal basis (ndof, 3) of the rigid translations."""
        Z = np.zeros((self.ndof, 3))
        for c in range(3):
            Z[c::3, c] = 1.0 / np.sqrt(self.nodes.size)
        return Z

    def remove_mean(self, u):
        """Subtract the Y1-volume-weighted mean of each component."""
        u = np.array(u, dtype=float)
        shaped = u.reshape(self.nodes.size, 3, -1)
        w = self.node_volume / self.node_volume.sum()
        shaped -= np.einsum("l,lck->ck", w, shaped)[None]
        return shaped.reshape(u.shape)

    def to_grid(self, u):
        """Scatter (ndof,) onto a periodic (n,n,n,3) array, zero on inclusion nodes."""
        g = np.zeros((self.n**3, 3))
        g[self.nodes] = u.reshape(-1, 3)
        return g.reshape(self.n, self.n, self.n, 3)


def assemble_periodic_elasticity(A1: ElasticTensor, geom: CellGeometry, backend=None):
    """Operator ψ ↦ ∫_{Y1} A1 e(·):e(ψ) on Y-periodic trilinear fields.

    Returns the operator, the unknown space, and the Y1 voxel list (with each
    voxel's local dof map) for load assembly.
    """
    n = geom.n
    corners = voxel_corner_ids(n, periodic=True)
    matrix_vox = np.flatnonzero(~geom.inclusion_mask.ravel())
    ec = corners[matrix_vox]
    nodes = np.unique(ec)
    local = np.full(n**3, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    en = local[ec]
    dofs = (3 * en[:, :, None] + np.arange(3)).reshape(-1, 24)
    ke = vector_stiffness(A1.voigt, geom.h)[None]
    op = ElementOperator(dofs, np.zeros(len(matrix_vox), dtype=np.int64), ke, 3 * nodes.size,
                         kind="periodic-elasticity", backend=backend)
    vol = np.bincount(en.ravel(), minlength=nodes.size) * geom.voxel_volume / 8.0
    space = PeriodicSpace(nodes=nodes, node_volume=vol, n=n)
    return op, space, matrix_vox


# --------------------------------------------------------------------------
# constrained forms on the inclusion


@dataclass
class InclusionForms:
    """Stiffness/mass of the constrained space V2 = {s bhat, s ∈ H^1_0(Y2)}
    plus the quadrature vectors needed downstream."""

    S: ElementOperator
    M: ElementOperator
    nodes: np.ndarray              # global periodic ids of interior inclusion nodes
    hbar_weights: np.ndarray       # (ndof, 3): h̄ = W^T s
    coupling_weights: np.ndarray   # (ndof,): ∫ A2 e(s bhat):e(bhat) = g · s
    cstar: float                   # ∫ A2 e(bhat):e(bhat)
    bhat_sq: float                 # ∫ |bhat|^2
    bhat_int: np.ndarray           # ∫ bhat
    perp_int: np.ndarray           # ∫ (I - b⊗b/|b|^2)
    xi: np.ndarray
    fingerprint: str

    @property
    def ndof(self):
        return self.nodes.size


def assemble_constrained_forms(A2: ElasticTensor, fld: SampledField, geom: CellGeometry, backend=None):
    """S(s, s') = ∫_{Y2} A2 e(s bhat):e(s' bhat),  M(s, s') = ∫_{Y2} s s' |bhat|^2.

    The product s·bhat is formed at every Gauss point, so the constraint
    ψ × b = 0 holds there exactly.
    """
    n, h = geom.n, geom.h
    if geom.is_empty:
        raise FieldError("no inclusion: constrained space is empty")
    inc_vox = np.flatnonzero(geom.inclusion_mask.ravel())
    corners = voxel_corner_ids(n, periodic=True)[inc_vox]
    interior = np.flatnonzero(geom.interior_inclusion_nodes().ravel())
    local = np.full(n**3, -1, dtype=np.int64)
    local[interior] = np.arange(interior.size)
    dofs = local[corners]

    bn = _gather_nodes(fld.bhat_nodes).reshape(n**3, 8, 3)[inc_vox]      # (ne, 8, 3)
    if not np.all(np.isfinite(bn)):
        raise FieldError("bhat undefined on an inclusion voxel")
    bq = np.einsum("qa,eai->eqi", SHAPE_AT_GAUSS, bn)                      # (ne, 8q, 3)
    G = GRAD_AT_GAUSS / h                                                  # (8q, 8, 3)
    # differencing against one corner makes a constant bhat give exactly zero strain
    gradb = np.einsum("qaj,eai->eqij", G, bn - bn[:, :1])                  # ∂_j bhat_i
    # ∇(N_a bhat)_ij = bhat_i ∂_j N_a + N_a ∂_j bhat_i
    grad_psi = (np.einsum("eqi,qaj->eqaij", bq, G)
                + np.einsum("qa,eqij->eqaij", SHAPE_AT_GAUSS, gradb))
    Bs = sym_to_voigt(grad_psi)                                            # (ne, 8q, 8, 6)
    eb = sym_to_voigt(gradb)                                               # (ne, 8q, 6)
    C = A2.voigt
    w = GAUSS_WEIGHT * h**3
    ke_S = np.einsum("eqai,ij,eqbj->eab", Bs, C, Bs) * w
    bsq = np.einsum("eqi,eqi->eq", bq, bq)
    ke_M = np.einsum("qa,eq,qb->eab", SHAPE_AT_GAUSS, bsq, SHAPE_AT_GAUSS) * w
    etype = np.arange(len(inc_vox))
    ndof = interior.size
    S = ElementOperator(dofs, etype, ke_S, ndof, kind="constrained-stiffness", backend=backend)
    M = ElementOperator(dofs, etype, ke_M, ndof, kind="constrained-mass", backend=backend)

    def scatter(vals):
        vals = vals.reshape(len(inc_vox) * 8, -1)
        idx = dofs.ravel()
        keep = idx >= 0
        out = np.zeros((ndof, vals.shape[1]))
        for c in range(vals.shape[1]):
            out[:, c] = np.bincount(idx[keep], weights=vals[keep, c], minlength=ndof)
        return out

    hbar_w = scatter(np.einsum("qa,eqi->eai", SHAPE_AT_GAUSS, bq) * w)
    coup_w = scatter(np.einsum("eqai,ij,eqj->ea", Bs, C, eb) * w)[:, 0]
    cstar = float(np.einsum("eqi,ij,eqj->", eb, C, eb) * w)
    braw = fld.b_gauss_raw.reshape(n**3, 8, 3)[inc_vox]
    nb = np.linalg.norm(braw, axis=-1, keepdims=True)
    d = np.divide(braw, nb, out=np.zeros_like(braw), where=nb > 0)
    perp = (np.eye(3) * (nb > 0)[..., None] - np.einsum("eqi,eqj->eqij", d, d)).sum(axis=(0, 1)) * w
    return InclusionForms(
        S=S, M=M, nodes=interior, hbar_weights=hbar_w, coupling_weights=coup_w, cstar=cstar,
        bhat_sq=float(bsq.sum() * w), bhat_int=bq.sum(axis=(0, 1)) * w, perp_int=perp,
        xi=np.asarray(fld.xi, dtype=float),
        fingerprint=f"{fld.fingerprint}-{_tensor_fp(A2)}",
    )


def _tensor_fp(A):
    import hashlib

    return hashlib.sha256(np.round(A.voigt, 14).tobytes()).hexdigest()[:8]


# --------------------------------------------------------------------------
# conjugate gradients


@dataclass
class CGInfo:
    iterations: np.ndarray
    residuals: np.ndarray


def cg_solve(K, rhs, nullspace=None, tol=1e-10, maxiter=20000, precond="jacobi", return_info=False):
    """Jacobi-preconditioned CG for symmetric positive (semi)definite K.

    ``rhs`` may hold several columns, each solved independently.
    ``nullspace`` is an orthonormal basis (ndof, k); rhs and iterates are
    projected onto its complement.
    """
    b = np.array(rhs, dtype=float)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    apply = K.apply if hasattr(K, "apply") else (lambda v: K @ v)

    def project(v):
        if nullspace is None:
            return v
        return v - nullspace @ (nullspace.T @ v)

    b = project(b)
    if precond == "jacobi":
        d = K.diagonal() if hasattr(K, "diagonal") else np.ones(b.shape[0])
        d = np.asarray(d, dtype=float)
        dinv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 1.0)[:, None]
    else:
        dinv = np.ones((b.shape[0], 1))

    bnorm = np.linalg.norm(b, axis=0)
    x = np.zeros_like(b)
    r = b.copy()
    active = bnorm > 0
    z = project(dinv * r)
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    its = np.zeros(b.shape[1], dtype=int)
    res = np.where(active, 1.0, 0.0)
    for it in range(1, maxiter + 1):
        if not active.any():
            break
        cols = np.flatnonzero(active)
        Ap = apply(p[:, cols])
        Ap = Ap.reshape(b.shape[0], -1)
        pAp = np.einsum("ij,ij->j", p[:, cols], Ap)
        alpha = rz[cols] / pAp
        x[:, cols] += alpha * p[:, cols]
        r[:, cols] -= alpha * Ap
        res[cols] = np.linalg.norm(r[:, cols], axis=0) / bnorm[cols]
        its[cols] = it
        done = res[cols] <= tol
        active[cols[done]] = False
        live = cols[~done]
        if live.size:
            zl = project(dinv * r[:, live])
            rz_new = np.einsum("ij,ij->j", r[:, live], zl)
            beta = rz_new / rz[live]
            rz[live] = rz_new
            p[:, live] = zl + beta * p[:, live]
    if active.any():
        raise ConvergenceError(
            f"CG did not converge in {maxiter} iterations; relative residuals {res[active].tolist()}"
        )
    x = project(x)
    out = x[:, 0] if vec else x
    if return_info:
        return out, CGInfo(its, res)
    return out
