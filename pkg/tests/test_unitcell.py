import numpy as np
import pytest

from lorentzhom.errors import ConfigError, FieldError, GeometryError
from lorentzhom.unitcell import FieldSpec, boundary_direction_rank, build_geometry, sample_field

from conftest import cube, example_field


def test_cube_volume_fraction_exact():
    g = cube(16)
    assert g.vol_inclusion == pytest.approx(0.125, abs=0)
    assert g.vol_matrix == pytest.approx(0.875, abs=0)


def test_ball_volume_close_to_continuum():
    g = build_geometry({"shape": "ball", "radius": 0.3, "n": 32})
    assert g.vol_inclusion == pytest.approx(4 / 3 * np.pi * 0.3**3, rel=0.03)


def test_inclusion_touching_boundary_rejected():
    with pytest.raises(GeometryError, match="boundary"):
        build_geometry({"shape": "cube", "size": 0.999, "n": 16})


def test_too_coarse_grid_rejected():
    with pytest.raises(GeometryError):
        build_geometry({"shape": "cube", "size": 0.5, "n": 4})


def test_empty_cell():
    g = build_geometry({"shape": "none", "n": 8})
    assert g.is_empty and g.vol_matrix == 1.0


def test_node_classes_partition_closure():
    g = cube(16)
    closure = g.closure_inclusion_nodes()
    assert np.array_equal(closure, g.interior_inclusion_nodes() | g.interface_nodes())
    assert g.interior_inclusion_nodes().sum() == 7**3


def test_compatibility_violation_reported():
    g = cube(16)
    spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [1, 0, 0], "gamma": "1"})
    with pytest.raises(FieldError, match="compatibility"):
        sample_field(spec, g)


def test_zero_mean_field_on_matrix_accepted():
    g = cube(16)
    spec = FieldSpec.from_config({"kind": "general", "components": ["sin(2*pi*x2)", "0", "sin(2*pi*x1)"]})
    fld = sample_field(spec, g)
    assert np.linalg.norm(fld.matrix_integral) < 1e-12


def test_vanishing_field_rejected():
    g = cube(16)
    spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "0",
                                  "support": "inclusion"})
    with pytest.raises(FieldError):
        sample_field(spec, g)


def test_direction_must_be_unit():
    with pytest.raises(FieldError):
        FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 2], "gamma": "1"})


def test_bad_expression_is_config_error():
    with pytest.raises(ConfigError):
        FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "__import__('os')"})


def test_example_field_is_rank_one_with_bhat_xi(geom16, example16):
    spec, fld = example16
    rank, xi = boundary_direction_rank(spec, geom16)
    assert rank == 1
    assert np.allclose(xi, [0, 0, 1])
    closure = geom16.closure_inclusion_nodes()
    assert np.allclose(fld.bhat_nodes[closure], [0, 0, 1])
    assert np.all(fld.bhat_nodes[~closure] == 0)
    assert np.all(fld.b_gauss[~geom16.inclusion_mask] == 0)


def test_two_direction_field_has_rank_two():
    g = cube(16)
    spec = FieldSpec.from_config({"kind": "general", "components": ["sin(2*pi*x2)", "0", "sin(2*pi*x1)"],
                                  "support": "inclusion"})
    rank, xi = boundary_direction_rank(spec, g)
    assert rank == 2
    assert abs(xi[1]) < 1e-12


def test_fingerprint_tracks_field_and_geometry(geom16):
    _, a = example_field(geom16, "4")
    _, b = example_field(geom16, "5")
    _, c = example_field(cube(16, size=0.375))
    assert len({a.fingerprint, b.fingerprint, c.fingerprint}) == 3
    _, a2 = example_field(geom16, "4")
    assert a.fingerprint == a2.fingerprint
