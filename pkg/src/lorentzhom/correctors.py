"""Periodic cell correctors on the matrix phase and the homogenized coefficients."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConsistencyError
from .fem import GAUSS_WEIGHT, SHAPE_AT_GAUSS, STRAIN_AT_GAUSS, VOIGT_PAIRS, voigt_to_sym
from .perfem import (ElasticTensor, PeriodicSpace, assemble_periodic_elasticity, cg_solve,
                     directional_matrix)
from .unitcell import CellGeometry, SampledField

MSTAR_RTOL = 1e-8


@dataclass
class CorrectorSet:
    """w[J] for the six Voigt pairs J = (j, k) and theta[j], as nodal arrays (ndof,)."""

    w: np.ndarray = field(repr=False)       # (6, ndof)
    theta: np.ndarray = field(repr=False)   # (3, ndof)
    space: PeriodicSpace = field(repr=False)
    operator: object = field(repr=False)
    elem_dofs: np.ndarray = field(repr=False)   # (Ne, 24)
    b_elem: np.ndarray = field(repr=False)      # (Ne, 8q, 3) b at Gauss points of Y1 voxels
    A1: ElasticTensor = field(repr=False)
    h: float = 0.0
    iterations: np.ndarray | None = None
    fingerprint: str = ""

    def w_pair(self, j, k):
        return self.w[VOIGT_PAIRS.index((min(j, k), max(j, k)))]

    # element-level quadrature helpers -----------------------------------
    def at_gauss(self, u):
        """Values at the Gauss points of every Y1 voxel, (Ne, 8q, 3)."""
        ue = _pad(u)[self.elem_dofs].reshape(-1, 8, 3)
        return np.einsum("qa,eai->eqi", SHAPE_AT_GAUSS, ue)

    def strain_integral(self, u):
        """∫_{Y1} e(u) in engineering Voigt form."""
        ue = _pad(u)[self.elem_dofs]
        Bint = STRAIN_AT_GAUSS.sum(axis=0) * GAUSS_WEIGHT * self.h**2
        return Bint @ ue.sum(axis=0)

    def cross_integral(self, u):
        """∫_{Y1} b × u."""
        return np.cross(self.b_elem, self.at_gauss(u)).sum(axis=(0, 1)) * GAUSS_WEIGHT * self.h**3


def _pad(u):
    return np.append(u, 0.0)


def solve_correctors(A1: ElasticTensor, geom: CellGeometry, fld: SampledField,
                     cg_tol=1e-10, cg_maxiter=20000, backend=None) -> CorrectorSet:
    """Zero-mean periodic solutions of the strain and Lorentz cell problems."""
    op, space, matrix_vox = assemble_periodic_elasticity(A1, geom, backend=backend)
    h = geom.h
    w8 = GAUSS_WEIGHT * h**3
    ne = matrix_vox.size
    dofs = op.dofs

    # strain loads: -∫ A1 E_J : e(ψ)
    Bint = STRAIN_AT_GAUSS.sum(axis=0) * GAUSS_WEIGHT * h**2      # (6, 24) = ∫_voxel B
    elem_load = -(Bint.T @ A1.voigt)                              # (24, 6)
    rhs_w = np.zeros((op.ndof, 6))
    for J in range(6):
        rhs_w[:, J] = np.bincount(dofs.ravel(), weights=np.tile(elem_load[:, J], ne), minlength=op.ndof)

    # Lorentz loads: -∫ (b × e_j)·ψ
    b_elem = fld.b_gauss.reshape(-1, 8, 3)[matrix_vox]
    rhs_t = np.zeros((op.ndof, 3))
    for j in range(3):
        bxe = np.cross(b_elem, np.eye(3)[j])                      # (Ne, 8q, 3)
        load = -np.einsum("qa,eqi->eai", SHAPE_AT_GAUSS, bxe) * w8   # (Ne, 8, 3)
        rhs_t[:, j] = np.bincount(dofs.ravel(), weights=load.ravel(), minlength=op.ndof)

    rhs = np.concatenate([rhs_w, rhs_t], axis=1)
    sol, info = cg_solve(op, rhs, nullspace=space.translations(), tol=cg_tol, maxiter=cg_maxiter,
                         return_info=True)
    sol = space.remove_mean(sol)
    fp = hashlib.sha256(f"{fld.fingerprint}-{A1.voigt.tobytes().hex()}-{cg_tol}".encode()).hexdigest()[:16]
    return CorrectorSet(w=sol[:, :6].T.copy(), theta=sol[:, 6:].T.copy(), space=space, operator=op,
                        elem_dofs=dofs, b_elem=b_elem, A1=A1, h=h, iterations=info.iterations, fingerprint=fp)


def corrector_residuals(cs: CorrectorSet, probes):
    """Relative residuals of the discrete cell problems tested against ``probes`` (ndof, k)."""
    op = cs.operator
    ne = cs.elem_dofs.shape[0]
    Bint = STRAIN_AT_GAUSS.sum(axis=0) * GAUSS_WEIGHT * cs.h**2
    out = []
    for J in range(6):
        load = np.bincount(cs.elem_dofs.ravel(), weights=np.tile(Bint.T @ cs.A1.voigt[:, J], ne),
                           minlength=op.ndof)
        r = probes.T @ (op.apply(cs.w[J]) + load)
        scale = np.abs(probes.T @ load).max() + 1e-300
        out.append(np.abs(r).max() / scale)
    w8 = GAUSS_WEIGHT * cs.h**3
    for j in range(3):
        bxe = np.cross(cs.b_elem, np.eye(3)[j])
        load = np.einsum("qa,eqi->eai", SHAPE_AT_GAUSS, bxe) * w8
        loadv = np.bincount(cs.elem_dofs.ravel(), weights=load.ravel(), minlength=op.ndof)
        r = probes.T @ (op.apply(cs.theta[j]) + loadv)
        scale = np.abs(probes.T @ loadv).max()
        out.append(np.abs(r).max() / scale if scale > 0 else np.abs(r).max())
    return np.array(out)


@dataclass
class HomogenizedCoefficients:
    A1star: np.ndarray      # (6, 6) engineering Voigt
    V1star: np.ndarray      # (3, 3)
    wstar: np.ndarray       # (3, 3): w*(M) = M : wstar
    mstar: float
    mstar_quadratic: float
    Mstar: float
    cstar: float
    lambdastar: np.ndarray  # (3,)
    mustar: np.ndarray      # (3,)
    A1dir: np.ndarray       # (3, 3)
    xi: np.ndarray
    vol_matrix: float
    bhat_sq: float
    perp_int: np.ndarray    # ∫_{Y2} (I - b⊗b/|b|²)
    fingerprint: str = ""

    def as_dict(self):
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}

    @classmethod
    def from_dict(cls, d):
        arr = {"A1star", "V1star", "wstar", "lambdastar", "mustar", "A1dir", "xi", "perp_int"}
        return cls(**{k: (np.array(v) if k in arr else v) for k, v in d.items()})

    def wstar_apply(self, M):
        return float(np.tensordot(M, self.wstar))


def homogenized_coefficients(cs: CorrectorSet, forms, geom: CellGeometry, fld: SampledField,
                             check=True) -> HomogenizedCoefficients:
    """All effective quantities of the homogenized equation along ξ.

    ``forms`` is the InclusionForms of the inclusion (or None for an empty
    inclusion, when the Y2 integrals vanish).
    """
    xi = np.asarray(fld.xi, dtype=float)
    C = cs.A1.voigt
    vol1 = geom.vol_matrix
    A1star = np.empty((6, 6))
    for J in range(6):
        A1star[:, J] = C @ (vol1 * np.eye(6)[J] + cs.strain_integral(cs.w[J]))
    A1star = 0.5 * (A1star + A1star.T)

    V1 = sum(xi[j] * voigt_to_sym(cs.strain_integral(cs.theta[j])) for j in range(3))
    W = np.zeros((3, 3))
    for J, (j, k) in enumerate(VOIGT_PAIRS):
        W[j, k] = W[k, j] = xi @ cs.cross_integral(cs.w[J])
    Vxi = sum(xi[j] * cs.theta[j] for j in range(3))
    mstar = float(xi @ cs.cross_integral(Vxi))
    m_quad = float(Vxi @ cs.operator.apply(Vxi))
    if check:
        scale = max(abs(mstar), abs(m_quad), 1e-300)
        if abs(mstar - m_quad) > MSTAR_RTOL * scale and scale > 1e-14:
            raise ConsistencyError(f"m* formulas disagree: {mstar!r} vs {m_quad!r}")

    if forms is None:
        cstar, bsq, bint, perp = 0.0, 0.0, np.zeros(3), np.zeros((3, 3))
    else:
        cstar, bsq, bint, perp = forms.cstar, forms.bhat_sq, forms.bhat_int, forms.perp_int
    lam = W @ xi - V1 @ xi
    A1dir = directional_matrix(A1star, xi)
    return HomogenizedCoefficients(
        A1star=A1star, V1star=V1, wstar=W, mstar=mstar, mstar_quadratic=m_quad,
        Mstar=vol1 + mstar + bsq, cstar=cstar, lambdastar=lam, mustar=vol1 * xi + bint,
        A1dir=0.5 * (A1dir + A1dir.T), xi=xi, vol_matrix=vol1, bhat_sq=bsq, perp_int=perp,
        fingerprint=cs.fingerprint + ("" if forms is None else "-" + forms.fingerprint),
    )

