"""Direct simulation of the ε-periodic elastodynamics with the Lorentz term.

Leapfrog with lumped mass; the stiff skew term (1/ε) b × v is applied as the
exact rotation of each nodal velocity, split symmetrically around it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, StabilityError
from .fem import LOCAL_OFFSETS, SHAPE_AT_GAUSS, vector_stiffness, voxel_corner_ids
from .perfem import ElasticTensor, ElementOperator
from .unitcell import CellGeometry, SampledField


def cells_per_axis(eps):
    k = int(round(1.0 / eps))
    if k < 1 or abs(k * eps - 1.0) > 1e-9:
        raise ConfigError(f"1/eps must be an integer, got eps={eps}")
    return k


@dataclass
class FineCoefficients:
    eps: float
    k: int                                  # cells per axis
    r: int                                  # voxels per cell per axis
    soft_mask: np.ndarray = field(repr=False)   # (N, N, N) True on the soft phase
    operator: ElementOperator = field(repr=False)
    mass: np.ndarray = field(repr=False)        # lumped nodal mass (n_int,)
    b_nodes: np.ndarray = field(repr=False)     # (n_int, 3), the field b(x/ε) at interior nodes
    element_matrices: np.ndarray = field(repr=False)  # (2, 24, 24): hard, soft

    @property
    def N(self):
        return self.k * self.r

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def n_int(self):
        return (self.N - 1) ** 3

    def node_points(self):
        c = np.arange(1, self.N) * self.h
        return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)

    def stable_dt(self):
        """2/omega_max from the element eigenvalue bound with lumped element mass."""
        m_e = self.h**3 / 8.0
        lam = max(np.linalg.eigvalsh(ke).max() for ke in self.element_matrices)
        return 2.0 / np.sqrt(lam / m_e)

    def phase_weights(self):
        """Nodal weights w with w·u = (1/|Ω|)∫_Ω χ_phase u for phases 1 and 2, shape (2, n_int)."""
        N = self.N
        counts = np.zeros((2, N + 1, N + 1, N + 1))
        for a, b, c in LOCAL_OFFSETS:
            counts[1, a:a + N, b:b + N, c:c + N] += self.soft_mask
            counts[0, a:a + N, b:b + N, c:c + N] += ~self.soft_mask
        return counts[:, 1:-1, 1:-1, 1:-1].reshape(2, -1) / (8.0 * N**3)

    def to_grid(self, u):
        """Interior vector (n_int*3,) -> nodal array (N+1)^3 x 3 with zero boundary."""
        N = self.N
        g = np.zeros((N + 1, N + 1, N + 1, 3))
        g[1:-1, 1:-1, 1:-1] = u.reshape(N - 1, N - 1, N - 1, 3)
        return g


def nodal_field(fld: SampledField, geom: CellGeometry):
    """Row sums of the Lorentz form per node: Σ_{e∋l} Σ_q N_l(q) b_e(q) / 8 on the periodic cell."""
    bq = fld.b_gauss                                   # (n,n,n,8q,3)
    out = np.zeros((geom.n,) * 3 + (3,))
    for l, off in enumerate(LOCAL_OFFSETS):
        contrib = np.einsum("q,...qi->...i", SHAPE_AT_GAUSS[:, l], bq) / 8.0
        out += np.roll(contrib, shift=tuple(off), axis=(0, 1, 2))
    return out


def assemble_fine(geom: CellGeometry, fld: SampledField, A1: ElasticTensor, A2: ElasticTensor, eps,
                  backend=None) -> FineCoefficients:
    """Tile the cell over Ω = (0,1)^3 with period ε; the cell grid gives the voxels per cell."""
    k = cells_per_axis(eps)
    r = geom.n
    N = k * r
    h = 1.0 / N
    soft = np.tile(geom.inclusion_mask, (k, k, k))
    ke = np.stack([vector_stiffness(A1.voigt, h), vector_stiffness(eps**2 * A2.voigt, h)])
    corners = voxel_corner_ids(N, periodic=False)
    nn = N + 1
    I, J, L = np.meshgrid(*(np.arange(nn),) * 3, indexing="ij")
    interior = (I > 0) & (I < N) & (J > 0) & (J < N) & (L > 0) & (L < N)
    local = np.full(nn**3, -1, dtype=np.int64)
    local[interior.ravel()] = np.arange(int(interior.sum()))
    en = local[corners]
    dofs = np.where(en[:, :, None] >= 0, 3 * en[:, :, None] + np.arange(3), -1).reshape(-1, 24)
    etype = soft.ravel().astype(np.int64)
    n_int = (N - 1) ** 3
    op = ElementOperator(dofs, etype, ke, 3 * n_int, kind="fine-elasticity", backend=backend)
    mass = np.full(n_int, h**3)
    bcell = nodal_field(fld, geom)
    idx = np.arange(1, N) % r
    b_nodes = bcell[np.ix_(idx, idx, idx)].reshape(-1, 3)
    return FineCoefficients(eps=float(eps), k=k, r=r, soft_mask=soft, operator=op, mass=mass,
                            b_nodes=b_nodes, element_matrices=ke)


@dataclass
class FineState:
    u: np.ndarray          # (n_int, 3) at t_n
    v_half: np.ndarray     # (n_int, 3) at t_{n+1/2}
    Ku: np.ndarray         # K u^n
    n: int = 0
    energy: float = 0.0    # E^{n-1/2} = ½|v^{n-1/2}|²_M + ½ u^{n-1}·K u^n
    work: float = 0.0      # forcing work accumulated from E^{1/2} to E^{n+1/2}
    work_at_energy: float = 0.0   # the same, up to E^{n-1/2}


class FineSolver:
    """Leapfrog/rotation integrator of  u'' + (1/ε) b × u' + M^{-1} K u = f."""

    def __init__(self, coeffs: FineCoefficients, dt, forcing=None, backend=None):
        self.c = coeffs
        self.dt = float(dt)
        limit = coeffs.stable_dt()
        if self.dt > limit:
            raise StabilityError(f"fine dt={self.dt:g} exceeds the elastic stability limit {limit:g}")
        self.forcing = forcing
        self.backend = backend
        self.pts = coeffs.node_points()
        b = coeffs.b_nodes
        nb = np.linalg.norm(b, axis=1)
        self.axis = np.ascontiguousarray(np.where(nb[:, None] > 0, b / np.where(nb > 0, nb, 1)[:, None],
                                                  [1.0, 0.0, 0.0]))
        self.rate = nb / coeffs.eps        # rotation speed |b|/ε
        self._full = (np.cos(-self.rate * self.dt), np.sin(-self.rate * self.dt))
        self._half = (np.cos(-0.5 * self.rate * self.dt), np.sin(-0.5 * self.rate * self.dt))

    def rotate(self, v, half=False):
        cos_a, sin_a = self._half if half else self._full
        return kernels.rotate_nodes(np.ascontiguousarray(v), self.axis, np.ascontiguousarray(cos_a),
                                    np.ascontiguousarray(sin_a), backend=self.backend)

    def _stiff(self, u):
        return self.c.operator.apply(u.ravel()).reshape(-1, 3)

    def _force(self, t):
        if self.forcing is None:
            return None
        return self.forcing(self.pts, t)

    def initial_state(self, u0, v0):
        u = np.array(u0, dtype=float).reshape(-1, 3)
        Ku = self._stiff(u)
        a = -Ku / self.c.mass[:, None]
        f = self._force(0.0)
        if f is not None:
            a += f
        v_half = self.rotate(np.array(v0, dtype=float).reshape(-1, 3), half=True) + 0.5 * self.dt * a
        st = FineState(u=u, v_half=v_half, Ku=Ku)
        st.energy = self.kinetic(v0) + 0.5 * float(u.ravel() @ Ku.ravel())
        return st

    def kinetic(self, v):
        v = np.asarray(v).reshape(-1, 3)
        return 0.5 * float(np.einsum("n,ni,ni->", self.c.mass, v, v))

    def step(self, st: FineState) -> FineState:
        """u^{n+1}, v^{n+3/2} from u^n, v^{n+1/2}: the first kick was applied when v^{n+1/2} was formed."""
        dt = self.dt
        u_next = st.u + dt * st.v_half
        Ku = self._stiff(u_next)
        a = -Ku / self.c.mass[:, None]
        f = self._force((st.n + 1) * dt)
        if f is not None:
            a += f
        v = st.v_half + 0.5 * dt * a
        v = self.rotate(v)
        v_next = v + 0.5 * dt * a
        work = st.work
        if f is not None:
            work += 0.5 * dt * float(np.einsum("n,ni,ni->", self.c.mass, f, v_next + st.v_half))
        # E^{n+1/2} = ½|v^{n+1/2}|² + ½ u^n · K u^{n+1}
        energy = self.kinetic(st.v_half) + 0.5 * float(st.u.ravel() @ Ku.ravel())
        new = FineState(u=u_next, v_half=v_next, Ku=Ku, n=st.n + 1, energy=energy, work=work,
                        work_at_energy=st.work)
        if not np.all(np.isfinite(v_next)):
            raise StabilityError(f"fine solution became non-finite at step {new.n}")
        return new


def step_fine(state: FineState, solver: FineSolver) -> FineState:
    return solver.step(state)


def phase_average(coeffs: FineCoefficients, u, phase):
    """Cell averages (1/ε³)∫_cell χ_phase u over every ε-cell, shape (k, k, k, 3).

    ``phase`` is 1 (hard) or 2 (soft).
    """
    if phase not in (1, 2):
        raise ValueError(f"phase must be 1 or 2, got {phase!r}")
    g = coeffs.to_grid(np.asarray(u).ravel())
    vox = sum(g[a:a + coeffs.N, b:b + coeffs.N, c:c + coeffs.N] for a, b, c in LOCAL_OFFSETS) / 8.0
    chi = coeffs.soft_mask if phase == 2 else ~coeffs.soft_mask
    vox = vox * chi[..., None]
    k, r = coeffs.k, coeffs.r
    return vox.reshape(k, r, k, r, k, r, 3).mean(axis=(1, 3, 5))


def cell_average_of_nodal(coeffs: FineCoefficients, values):
    """Cell averages of a nodal field given on interior nodes (zero boundary)."""
    g = coeffs.to_grid(np.asarray(values).ravel())
    vox = sum(g[a:a + coeffs.N, b:b + coeffs.N, c:c + coeffs.N] for a, b, c in LOCAL_OFFSETS) / 8.0
    k, r = coeffs.k, coeffs.r
    return vox.reshape(k, r, k, r, k, r, 3).mean(axis=(1, 3, 5))


@dataclass
class FineRun:
    t: np.ndarray
    energy: np.ndarray
    kinetic: np.ndarray
    work: np.ndarray
    hard_mean: np.ndarray
    soft_mean: np.ndarray
    sample_t: list
    hard_avg: list
    soft_avg: list
    snapshots: list
    dt: float


def choose_dt(coeffs: FineCoefficients, spacing, cfl=0.9, max_rotation=None):
    """Largest step below cfl times the stable limit that divides ``spacing``.

    The rotation substep is stable for any step, but the split only resolves
    the slow gyroscopic drift when the per-step angle |b| dt / ε is small;
    ``max_rotation`` (radians) caps that angle.
    """
    limit = cfl * coeffs.stable_dt()
    bmax = float(np.linalg.norm(coeffs.b_nodes, axis=1).max()) if coeffs.b_nodes.size else 0.0
    if max_rotation is not None and bmax > 0:
        limit = min(limit, max_rotation * coeffs.eps / bmax)
    sub = int(np.ceil(spacing / limit - 1e-12))
    return spacing / sub


def run_fine(solver: FineSolver, u0, v0, T, sample_times=(), keep_snapshots=False):
    """Integrate to T, recording the energy every step and phase averages at sample times."""
    dt = solver.dt
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ConfigError("fine dt must divide the final time")
    sample_steps = {int(round(s / dt)): s for s in sample_times}
    for s, ts in sample_steps.items():
        if abs(s * dt - ts) > 1e-9:
            raise ConfigError(f"sample time {ts} is not on the fine time grid")
    c = solver.c
    st = solver.initial_state(u0, v0)
    t, energy, kin, work, hard_m, soft_m = [], [], [], [], [], []
    samples_t, hard_avg, soft_avg, snaps = [], [], [], []
    weights = c.phase_weights()

    for n in range(nsteps + 1):
        t.append(n * dt)
        hm, sm = weights @ st.u
        hard_m.append(hm)
        soft_m.append(sm)
        if n in sample_steps:
            samples_t.append(n * dt)
            hard_avg.append(phase_average(c, st.u, 1))
            soft_avg.append(phase_average(c, st.u, 2))
            if keep_snapshots:
                snaps.append(st.u.copy())
        if n == nsteps:
            break
        kin.append(solver.kinetic(st.v_half))
        st = solver.step(st)
        energy.append(st.energy)
        work.append(st.work_at_energy)
    # energy[n] is E^{n+1/2}; work[n] is the forcing work done between E^{1/2} and it
    return FineRun(np.array(t), np.array(energy), np.array(kin), np.array(work), np.array(hard_m),
                   np.array(soft_m), samples_t, hard_avg, soft_avg, snaps, dt)
