import numpy as np
import pytest

from lorentzhom.errors import ConfigError, ConvergenceError
from lorentzhom.fem import scalar_stiffness, sym_to_voigt, voigt_to_sym, vector_stiffness
from lorentzhom.perfem import (ElasticTensor, assemble_constrained_forms, assemble_periodic_elasticity,
                               cg_solve)


def test_isotropic_tensor_voigt_entries():
    A = ElasticTensor.isotropic(2.0, 3.0)
    assert A.voigt[0, 0] == 8.0 and A.voigt[0, 1] == 2.0 and A.voigt[3, 3] == 3.0
    assert A.ellipticity == pytest.approx(6.0)


def test_non_elliptic_tensor_rejected():
    C = np.eye(6)
    C[0, 0] = -1.0
    with pytest.raises(ConfigError):
        ElasticTensor(C)


def test_voigt_roundtrip(rng):
    m = rng.standard_normal((3, 3))
    m = m + m.T
    assert np.allclose(voigt_to_sym(sym_to_voigt(m)), m)


def test_element_stiffness_kills_rigid_motions(iso):
    ke = vector_stiffness(iso.voigt, 0.1)
    assert np.allclose(ke, ke.T)
    corners = np.array([[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=float) * 0.1
    rot = np.cross([0.3, -0.2, 0.7], corners).reshape(-1)
    shift = np.tile([1.0, -2.0, 0.5], 8)
    assert np.abs(ke @ rot).max() < 1e-12
    assert np.abs(ke @ shift).max() < 1e-12


def test_periodic_operator_symmetric_with_translation_kernel(iso, geom16, rng):
    op, space, _ = assemble_periodic_elasticity(iso, geom16)
    x, y = rng.standard_normal((2, op.ndof))
    assert abs(x @ op.apply(y) - y @ op.apply(x)) < 1e-10 * abs(x @ op.apply(y))
    for t in space.translations().T:
        assert np.abs(op.apply(t)).max() < 1e-12
    assert np.allclose(op.diagonal(), op.to_sparse().diagonal())


def test_cg_multi_rhs_solves_projected_system(iso, geom16, rng):
    op, space, _ = assemble_periodic_elasticity(iso, geom16)
    Z = space.translations()
    rhs = rng.standard_normal((op.ndof, 2))
    rhs -= Z @ (Z.T @ rhs)
    x = cg_solve(op, rhs, nullspace=Z, tol=1e-10)
    res = np.linalg.norm(op.apply(x) - rhs, axis=0) / np.linalg.norm(rhs, axis=0)
    assert res.max() < 1e-9


def test_cg_reports_nonconvergence(iso, geom16, rng):
    op, space, _ = assemble_periodic_elasticity(iso, geom16)
    rhs = space.remove_mean(rng.standard_normal(op.ndof))
    with pytest.raises(ConvergenceError):
        cg_solve(op, rhs, nullspace=space.translations(), tol=1e-14, maxiter=3)


def test_constrained_forms_for_constant_direction(iso, geom16, example16):
    _, fld = example16
    F = assemble_constrained_forms(iso, fld, geom16)
    assert F.ndof == 7**3
    assert F.cstar == 0.0
    assert F.bhat_sq == pytest.approx(geom16.vol_inclusion)
    assert np.allclose(F.bhat_int, [0, 0, geom16.vol_inclusion])
    assert np.abs(F.perp_int - np.diag([1, 1, 0]) * geom16.vol_inclusion).max() < 1e-12
    # with bhat = e3 the constrained stiffness is the scalar form of A2 e(s e3):e(s e3)
    Ahat = np.eye(3) + 2 * np.outer([0, 0, 1], [0, 0, 1])
    assert np.abs(F.S.ke[0] - scalar_stiffness(Ahat, geom16.h)).max() < 1e-12
