import numpy as np
import pytest

from lorentzhom.errors import ConvergenceError, FingerprintError
from lorentzhom.perfem import assemble_constrained_forms
from lorentzhom.spectrum import ModeSet, mode_residuals, solve_modes, sum_rule_defect


@pytest.fixture(scope="module")
def forms16(iso, geom16, example16):
    return assemble_constrained_forms(iso, example16[1], geom16)


@pytest.fixture(scope="module")
def modes16(forms16):
    return solve_modes(forms16, 60)


def test_modes_are_sorted_orthonormal_eigenpairs(modes16, forms16):
    assert np.all(np.diff(modes16.mu) >= 0)
    res, ortho = mode_residuals(modes16, forms16)
    assert res.max() < 1e-8 and ortho < 1e-10


def test_lowest_mode_near_separable_closed_form(modes16):
    exact = (np.pi / 0.5) ** 2 * 5.0
    assert abs(modes16.mu[0] ** 2 / exact - 1) < 0.08


def test_lanczos_agrees_with_dense(forms16, modes16):
    it = solve_modes(forms16, 4, method="lanczos")
    assert np.allclose(it.mu, modes16.mu[:4], rtol=1e-8)
    assert np.allclose(np.abs(it.hbar), np.abs(modes16.hbar[:4]), atol=1e-8)


def test_sum_rule_defect_nonnegative_and_nonincreasing(modes16, forms16):
    d = [sum_rule_defect(modes16, forms16, N) for N in range(1, modes16.count + 1)]
    assert min(d) >= -1e-12
    assert np.all(np.diff(d) <= 1e-14)


def test_full_spectrum_sum_equals_projection_of_bhat(forms16):
    # with every discrete mode retained the series sums to the M-projection of
    # bhat.xi onto the constrained space; the remainder is the O(h) boundary layer
    full = solve_modes(forms16, forms16.ndof)
    w = forms16.hbar_weights @ forms16.xi
    M = forms16.M.to_sparse().toarray()
    projected = w @ np.linalg.solve(M, w)
    assert full.weights(forms16.xi).sum() == pytest.approx(projected, rel=1e-10)
    assert 0 < sum_rule_defect(full, forms16) < 0.25 * forms16.bhat_sq


def test_too_many_modes(forms16):
    with pytest.raises(ConvergenceError):
        solve_modes(forms16, forms16.ndof + 1)


def test_save_load_roundtrip_and_fingerprint(modes16, tmp_path):
    modes16.save(tmp_path)
    back = ModeSet.load(tmp_path, fingerprint=modes16.fingerprint)
    assert np.array_equal(back.s, modes16.s) and back.digest() == modes16.digest()
    with pytest.raises(FingerprintError):
        ModeSet.load(tmp_path, fingerprint="other")


def test_solve_is_deterministic(forms16, modes16):
    again = solve_modes(forms16, 60)
    assert again.digest() == modes16.digest()
