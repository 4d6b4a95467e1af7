import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lorentzhom import kernels

pytestmark = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")

finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_apply_matches_between_backends(ne, ncol, seed):
    rng = np.random.default_rng(seed)
    ndof = 30
    dofs = rng.integers(0, ndof, size=(ne, 24))
    etype = rng.integers(0, 2, size=ne)
    ke = rng.standard_normal((2, 24, 24))
    x = rng.standard_normal((ndof, ncol)) if ncol > 1 else rng.standard_normal(ndof)
    a = kernels.apply_elements(x, dofs, etype, ke, backend="cython")
    b = kernels.apply_elements(x, dofs, etype, ke, backend="numpy")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 3), elements=finite), arrays(np.float64, (5, 3), elements=finite),
       arrays(np.float64, 5, elements=st.floats(-50, 50)))
def test_rotation_matches_between_backends_and_keeps_norm(v, axis, theta):
    nrm = np.linalg.norm(axis, axis=1)
    axis = np.where(nrm[:, None] > 1e-3, axis / np.where(nrm > 1e-3, nrm, 1)[:, None], [0.0, 0.0, 1.0])
    c, s = np.cos(theta), np.sin(theta)
    a = kernels.rotate_nodes(v.copy(), axis, c, s, backend="cython")
    b = kernels.rotate_nodes(v.copy(), axis, c, s, backend="numpy")
    assert np.allclose(a, b, rtol=1e-13, atol=1e-10)
    n0 = np.linalg.norm(v, axis=1)
    for w in (a, b):
        assert np.all(np.abs(np.linalg.norm(w, axis=1) - n0) <= 4 * np.spacing(n0) + 1e-300)


def test_rotation_is_exact_for_quarter_turn():
    v = np.array([[1.0, 0.0, 0.0]])
    axis = np.array([[0.0, 0.0, 1.0]])
    for be in ("cython", "numpy"):
        w = kernels.rotate_nodes(v.copy(), axis, np.array([0.0]), np.array([1.0]), backend=be)
        assert np.allclose(w, [[0.0, 1.0, 0.0]], atol=1e-16)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.apply_elements(np.zeros(3), np.zeros((1, 24), dtype=np.int64), np.zeros(1, dtype=np.int64),
                               np.zeros((1, 24, 24)), backend="fortran")
