import numpy as np
import pytest

from lorentzhom.errors import ConfigError
from lorentzhom.kernel import (kernel_series, kernel_wave_oracle, resolvent_kernel, time_grid,
                               volterra_forward, volterra_resolve, wave_stable_dt)
from lorentzhom.spectrum import ModeSet


def synthetic(dt, T=1.0):
    t = np.arange(int(round(T / dt)) + 1) * dt
    return t, 0.1 * np.cos(2 * np.pi * t), -0.2 * np.pi * np.sin(2 * np.pi * t)


def test_time_grid_requires_whole_steps():
    assert time_grid(1.0, 0.25).tolist() == [0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(ConfigError):
        time_grid(1.0, 0.3)


def test_series_single_mode_closed_form():
    ms = ModeSet(mu=np.array([3.0]), s=np.zeros((1, 1)), hbar=np.array([[0.1, 0.2, 0.4]]),
                 coupling=np.array([0.5]), fingerprint="x")
    t = np.linspace(0, 2, 41)
    kb = kernel_series(ms, [0, 0, 1], t)
    assert np.allclose(kb.kbar1, 0.16 * np.cos(3 * t))
    assert np.allclose(kb.kbar1_prime, -0.48 * np.sin(3 * t))
    assert np.allclose(kb.kbarbar[:, 0, 2], 0.04 * np.sin(3 * t) / 3)
    assert np.allclose(kb.kbarbar, kb.kbarbar.transpose(0, 2, 1))
    assert np.all(kb.kbarbar[0] == 0)


def test_volterra_trivial_kernels():
    t = np.arange(1001) * 1e-3
    g = t**2
    assert np.abs(volterra_resolve(0 * t, g, 1e-3) - g).max() < 1e-15
    assert np.abs(volterra_resolve(0 * t + 0.3, g, 1e-3) - g / 0.7).max() < 1e-12


def test_volterra_second_kind_coefficient_must_be_positive():
    with pytest.raises(ConfigError):
        volterra_resolve(np.ones(10), np.zeros(10), 0.1)


def test_forward_roundtrip_and_resolvent(rng):
    t, K, Kp = synthetic(1e-3)
    g = rng.standard_normal(t.size)
    g[0] = 0.0
    a = volterra_resolve(K, g, 1e-3, Kp)
    assert np.abs(volterra_forward(K, a, 1e-3, Kp) - g).max() <= 1e-12 * np.abs(g).max()
    R = resolvent_kernel(K, 1e-3, Kp)
    assert np.abs(R.apply(g) - a).max() <= 1e-12 * np.abs(a).max()
    with pytest.raises(ValueError):
        R.apply(np.ones(t.size))


def test_volterra_second_order():
    def solve(dt):
        t, K, Kp = synthetic(dt)
        return volterra_resolve(K, t**2, dt, Kp)
    ref = solve(1 / 6400)
    errs = [np.abs(solve(dt) - ref[::int(round(dt * 6400))]).max() for dt in (1 / 50, 1 / 100, 1 / 200)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert orders.min() >= 1.9


def test_wave_oracle_starts_at_inclusion_volume(iso, geom16):
    xi = np.array([0.0, 0, 1])
    t, K = kernel_wave_oracle(iso, geom16, xi, 0.2)
    assert K[0] == pytest.approx(geom16.vol_inclusion)
    assert t[1] == pytest.approx(0.9 * wave_stable_dt(iso, geom16, xi))
    assert np.abs(K).max() <= K[0] * (1 + 1e-12)
