import numpy as np
import pytest

from lorentzhom.correctors import HomogenizedCoefficients, corrector_residuals, homogenized_coefficients, solve_correctors
from lorentzhom.perfem import ElasticTensor, assemble_constrained_forms
from lorentzhom.unitcell import FieldSpec, build_geometry, sample_field


@pytest.fixture(scope="module")
def example_coeffs(iso, geom16, example16):
    _, fld = example16
    cs = solve_correctors(iso, geom16, fld)
    forms = assemble_constrained_forms(iso, fld, geom16)
    return cs, homogenized_coefficients(cs, forms, geom16, fld)


def test_correctors_solve_their_cell_problems(example_coeffs, rng):
    cs, _ = example_coeffs
    probes = rng.standard_normal((cs.operator.ndof, 5))
    assert np.max(corrector_residuals(cs, probes)) < 1e-8


def test_homogenized_tensor_symmetric_positive_and_softer(example_coeffs, iso):
    _, c = example_coeffs
    assert np.allclose(c.A1star, c.A1star.T)
    assert np.linalg.eigvalsh(c.A1star).min() > 0
    assert np.all(np.linalg.eigvalsh(iso.voigt - c.A1star) > 0)


def test_cubic_symmetry_of_cube_inclusion(example_coeffs):
    _, c = example_coeffs
    A = c.A1star
    assert A[0, 0] == pytest.approx(A[1, 1], rel=1e-8) == pytest.approx(A[2, 2], rel=1e-8)
    assert A[3, 3] == pytest.approx(A[5, 5], rel=1e-8)
    assert abs(A[0, 3]) < 1e-9


def test_example_identities_at_n16(example_coeffs):
    _, c = example_coeffs
    assert abs(c.Mstar - 1.0) < 1e-8
    assert c.cstar == 0.0
    assert np.abs(c.lambdastar).max() < 1e-8
    assert np.abs(c.mustar - [0, 0, 1]).max() < 1e-8


def test_two_mstar_formulas_agree_for_field_across_xi():
    g = build_geometry({"shape": "cube", "size": 0.5, "n": 12})
    # the constant is fixed so that the voxel quadrature of b3 over Y1 vanishes
    x1 = g.gauss_points()[..., 0][~g.inclusion_mask]
    quad = np.cos(2 * np.pi * x1).sum() * g.voxel_volume / 8
    spec = FieldSpec.from_config({"kind": "general",
                                  "components": ["sin(2*pi*x2)", "0", f"cos(2*pi*x1) - {float(quad / g.vol_matrix)!r}"],
                                  "direction": [0, 0, 1], "support": "cell"})
    fld = sample_field(spec, g)
    A = ElasticTensor.isotropic(1.0, 1.0)
    cs = solve_correctors(A, g, fld)
    c = homogenized_coefficients(cs, assemble_constrained_forms(A, fld, g), g, fld)
    assert c.mstar > 0
    assert c.mstar == pytest.approx(c.mstar_quadratic, rel=1e-6)


def test_patch_test_empty_inclusion(rng):
    g = build_geometry({"shape": "none", "n": 8})
    spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "sin(2*pi*x1)"})
    fld = sample_field(spec, g)
    C = rng.standard_normal((6, 6))
    A = ElasticTensor(C @ C.T + 6 * np.eye(6))
    cs = solve_correctors(A, g, fld)
    c = homogenized_coefficients(cs, None, g, fld)
    assert np.abs(cs.w).max() < 1e-10
    assert np.abs(c.A1star - A.voigt).max() < 1e-10 * np.abs(A.voigt).max()


def test_coefficients_dict_roundtrip(example_coeffs):
    _, c = example_coeffs
    back = HomogenizedCoefficients.from_dict(c.as_dict())
    assert np.array_equal(back.A1star, c.A1star) and back.Mstar == c.Mstar
