import dataclasses

import numpy as np
import pytest

from lorentzhom.errors import ConfigError, StabilityError
from lorentzhom.finescale import (FineSolver, assemble_fine, cell_average_of_nodal, cells_per_axis, choose_dt,
                                  phase_average, run_fine)
from lorentzhom.perfem import ElasticTensor
from lorentzhom.unitcell import FieldSpec, build_geometry, sample_field

from conftest import cube, example_field


@pytest.fixture(scope="module")
def cell8():
    g = cube(8)
    return g, example_field(g, "4")[1]


def sine_u0(p):
    return 0.1 * np.prod(np.sin(np.pi * p), axis=1)[:, None] * np.array([1.0, 0.0, 1.0])


def test_eps_must_be_reciprocal_integer():
    assert cells_per_axis(0.125) == 8
    with pytest.raises(ConfigError):
        cells_per_axis(0.3)


def test_tiling_counts_and_volume_fraction(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    assert c.N == 16 and c.soft_mask.mean() == g.vol_inclusion
    lab = c.soft_mask.reshape(2, 8, 2, 8, 2, 8).any(axis=(1, 3, 5))
    assert lab.sum() == 8
    c4 = assemble_fine(g, fld, iso, iso, 0.25)
    assert c4.soft_mask.mean() == c.soft_mask.mean()


def test_soft_stiffness_scales_with_eps_squared(cell8, iso):
    g, fld = cell8
    c4 = assemble_fine(g, fld, iso, iso, 0.25)
    c8 = assemble_fine(g, fld, iso, iso, 0.125)
    # the element matrices also scale with h, so compare soft against hard within each run
    nz = c8.element_matrices[0] != 0
    soft_over_hard = [c.element_matrices[1][nz] / c.element_matrices[0][nz] for c in (c4, c8)]
    assert np.allclose(soft_over_hard[0], 0.25**2, rtol=1e-14)
    assert np.allclose(soft_over_hard[0] / soft_over_hard[1], 4.0, rtol=1e-14)


def test_phase_weights_split_the_domain_mean(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    u = np.ones((c.n_int, 3))
    w = c.phase_weights()
    # constants lose only the boundary layer of the zero Dirichlet nodes
    assert w.sum() == pytest.approx(((c.N - 1) / c.N) ** 3 * 1.0, rel=0.2)
    assert np.allclose(w @ u, (w.sum(axis=1))[:, None])
    with pytest.raises(ValueError):
        phase_average(c, u, 3)


def test_phase_average_at_t0_matches_hard_fraction(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.25)
    u0 = sine_u0(c.node_points())
    err = phase_average(c, u0, 1) - g.vol_matrix * cell_average_of_nodal(c, u0)
    ref = np.abs(g.vol_matrix * cell_average_of_nodal(c, u0)).max()
    assert np.abs(err).max() < 0.2 * ref


def test_dt_above_cfl_rejected(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    with pytest.raises(StabilityError):
        FineSolver(c, 1.01 * c.stable_dt())


def test_choose_dt_caps_rotation_and_divides_spacing(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.25)
    dt = choose_dt(c, 0.25, max_rotation=0.5)
    bmax = np.linalg.norm(c.b_nodes, axis=1).max()
    assert dt * bmax / c.eps <= 0.5 + 1e-12
    assert abs(0.25 / dt - round(0.25 / dt)) < 1e-9


def test_energy_conserved_without_forcing(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    s = FineSolver(c, choose_dt(c, 0.05))
    u0 = sine_u0(c.node_points())
    run = run_fine(s, u0, np.zeros_like(u0), 1000 * s.dt)
    assert len(run.energy) == 1000
    assert np.abs(run.energy - run.energy[0]).max() / run.energy[0] < 1e-6


def test_forcing_work_balance(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)

    def f(p, t):
        return np.cos(5 * t) * np.prod(np.sin(np.pi * p), axis=1)[:, None] * np.array([0.0, 1.0, 0.5])
    s = FineSolver(c, choose_dt(c, 0.05), forcing=f)
    u0 = sine_u0(c.node_points())
    run = run_fine(s, u0, np.zeros_like(u0), 200 * s.dt)
    balance = (run.energy - run.energy[0]) - run.work
    assert np.abs(run.work).max() > 1e-3 * run.energy[0]
    assert np.abs(balance).max() <= 1e-8 * np.abs(run.energy).max()


def test_run_is_bitwise_reproducible(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    s = FineSolver(c, choose_dt(c, 0.05))
    u0 = sine_u0(c.node_points())
    a = run_fine(s, u0, np.zeros_like(u0), 0.05, sample_times=[0.05])
    b = run_fine(s, u0, np.zeros_like(u0), 0.05, sample_times=[0.05])
    assert np.array_equal(a.energy, b.energy) and np.array_equal(a.hard_avg[0], b.hard_avg[0])


def test_off_grid_sample_time_rejected(cell8, iso):
    g, fld = cell8
    c = assemble_fine(g, fld, iso, iso, 0.5)
    s = FineSolver(c, choose_dt(c, 0.05))
    u0 = np.zeros((c.n_int, 3))
    with pytest.raises(ConfigError):
        run_fine(s, u0, u0, 0.05, sample_times=[0.5 * s.dt])


def test_plane_wave_second_order():
    """Homogeneous medium, b = 0: u = sin(3 pi x1) cos(3 pi t) e2 at the centre before boundary waves arrive."""
    A = ElasticTensor.isotropic(1.0, 1.0)
    errs = []
    for r in (8, 16):
        g = build_geometry({"shape": "none", "n": r})
        spec = FieldSpec.from_config({"kind": "fixed_direction", "direction": [0, 0, 1], "gamma": "sin(2*pi*x1)"})
        c = assemble_fine(g, sample_field(spec, g), A, A, 0.5)
        c = dataclasses.replace(c, b_nodes=np.zeros_like(c.b_nodes))
        s = FineSolver(c, choose_dt(c, 0.15 / 7))
        p = c.node_points()
        u0 = np.zeros_like(p)
        u0[:, 1] = np.sin(3 * np.pi * p[:, 0])
        ic = np.argmin(np.linalg.norm(p - 0.5, axis=1))
        st = s.initial_state(u0, np.zeros_like(u0))
        worst = 0.0
        for n in range(1, int(round(0.15 / s.dt)) + 1):
            st = s.step(st)
            worst = max(worst, abs(st.u[ic, 1] + np.cos(3 * np.pi * n * s.dt)))
        errs.append(worst)
    assert errs[0] / errs[1] > 3.5
