"""Macroscopic evolution of the amplitude α along ξ, with modal memory registers.

The memory integrals ∫_0^t cos(μ(t-s)) ∂_sα ds are carried as registers
(r, z) that rotate exactly over a step in which ∂_tα is constant.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correctors import HomogenizedCoefficients
from .errors import ConfigError, StabilityError, UnsupportedError
from .expr import VectorExpression, hessian_fd
from .fem import voigt_to_full

GROWTH_LIMIT = 1e6


# --------------------------------------------------------------------------
# grid and finite differences


@dataclass(frozen=True)
class MacroGrid:
    """Uniform grid on Ω = (0,1)^3 with m cells per axis.

    Dirichlet grids carry the (m-1)^3 interior nodes; periodic grids the m^3
    nodes of the torus.
    """

    m: int
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.m < 2:
            raise ConfigError("macro grid needs at least 2 cells per axis")
        if self.bc not in ("dirichlet", "periodic"):
            raise ConfigError(f"unknown boundary condition {self.bc!r}")

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def coords(self):
        if self.bc == "dirichlet":
            return np.arange(1, self.m) * self.h
        return np.arange(self.m) * self.h

    @property
    def shape(self):
        return (self.coords.size,) * 3

    def points(self):
        c = self.coords
        return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)

    def shift(self, a, axis, k):
        """a evaluated at the neighbour offset by k nodes along axis."""
        if self.bc == "periodic":
            return np.roll(a, -k, axis=axis)
        out = np.zeros_like(a)
        src = [slice(None)] * a.ndim
        dst = [slice(None)] * a.ndim
        if k > 0:
            src[axis], dst[axis] = slice(k, None), slice(None, -k)
        else:
            src[axis], dst[axis] = slice(None, k), slice(-k, None)
        out[tuple(dst)] = a[tuple(src)]
        return out

    def interpolate(self, field_values, pts):
        """Trilinear interpolation (zero boundary values for Dirichlet grids)."""
        from scipy.interpolate import RegularGridInterpolator

        if self.bc == "dirichlet":
            c = np.arange(self.m + 1) * self.h
            full = np.zeros((self.m + 1,) * 3 + field_values.shape[3:])
            full[1:-1, 1:-1, 1:-1] = field_values
        else:
            c = np.arange(self.m + 1) * self.h
            full = np.pad(field_values, [(0, 1)] * 3 + [(0, 0)] * (field_values.ndim - 3), mode="wrap")
        return RegularGridInterpolator((c, c, c), full)(pts)


def div_aniso(grid: MacroGrid, A, u):
    """Centred second differences of div(A ∇u) including mixed terms."""
    h2 = grid.h**2
    out = np.zeros_like(u)
    for a in range(3):
        if A[a, a] != 0:
            out += A[a, a] * (grid.shift(u, a, 1) - 2 * u + grid.shift(u, a, -1)) / h2
        for b in range(a + 1, 3):
            c = A[a, b] + A[b, a]
            if c != 0:
                pp = grid.shift(grid.shift(u, a, 1), b, 1)
                pm = grid.shift(grid.shift(u, a, 1), b, -1)
                mp = grid.shift(grid.shift(u, a, -1), b, 1)
                mm = grid.shift(grid.shift(u, a, -1), b, -1)
                out += c * (pp - pm - mp + mm) / (4 * h2)
    return out


def drift(grid: MacroGrid, lam, u):
    """Centred λ·∇u."""
    out = np.zeros_like(u)
    for a in range(3):
        if lam[a] != 0:
            out += lam[a] * (grid.shift(u, a, 1) - grid.shift(u, a, -1)) / (2 * grid.h)
    return out


def gershgorin_bound(grid: MacroGrid, A, c=0.0):
    A = np.asarray(A)
    return (4 * np.trace(A) + np.abs(A - np.diag(np.diag(A))).sum()) / grid.h**2 + abs(c)


# --------------------------------------------------------------------------
# initial data and the memory force


@dataclass
class InitialData:
    """Closed-form u0, v0 (functions of x) and f (function of x and t)."""

    u0: VectorExpression
    v0: VectorExpression
    f: VectorExpression

    @classmethod
    def from_config(cls, cfg):
        zero = ["0", "0", "0"]
        return cls(VectorExpression(cfg.get("u0", zero)), VectorExpression(cfg.get("v0", zero)),
                   VectorExpression(cfg.get("f", zero)))

    def u0_at(self, pts):
        return self.u0(pts[..., 0], pts[..., 1], pts[..., 2])

    def v0_at(self, pts):
        return self.v0(pts[..., 0], pts[..., 1], pts[..., 2])

    def f_at(self, pts, t):
        return self.f(pts[..., 0], pts[..., 1], pts[..., 2], t)

    def check_boundary(self, tol=1e-10):
        """u0 must vanish on ∂Ω."""
        s = np.linspace(0, 1, 9)
        A, B = np.meshgrid(s, s, indexing="ij")
        z, o = np.zeros_like(A), np.ones_like(A)
        faces = [(z, A, B), (o, A, B), (A, z, B), (A, o, B), (A, B, z), (A, B, o)]
        worst = max(np.abs(self.u0(*f)).max() for f in faces)
        if worst > tol:
            raise ConfigError(f"u0 does not vanish on the boundary (max {worst:.3g})")

    def strain_divergence(self, A1star_full, xi, pts, step=2e-3):
        """div(A1* e(u0) ξ) = Σ A_abkl ξ_b ∂_a∂_k u0_l by fourth-order differences."""
        flat = pts.reshape(-1, 3)
        out = np.zeros(flat.shape[0])
        if self.u0.is_zero:
            return out.reshape(pts.shape[:-1])
        for l, comp in enumerate(self.u0.components):
            if comp.is_zero:
                continue
            H = hessian_fd(lambda p: comp(p[:, 0], p[:, 1], p[:, 2]), flat, step)
            out += np.einsum("abk,b,mak->m", A1star_full[:, :, :, l], xi, H)
        return out.reshape(pts.shape[:-1])


@dataclass
class ModalData:
    """The retained modes as used by the macro model."""

    mu: np.ndarray
    hbar: np.ndarray
    coupling: np.ndarray

    @classmethod
    def from_kernel(cls, kb, count=None):
        N = kb.mu.size if count is None else min(int(count), kb.mu.size)
        return cls(kb.mu[:N], kb.hbar[:N], kb.coupling[:N])

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros((0, 3)), np.zeros(0))

    @property
    def count(self):
        return self.mu.size


class ForceIntegrator:
    """The convolutions q_i(t) = ∫_0^t sin(μ_i(t-s))/μ_i (hbar_i·f(s)) ds.

    f is taken piecewise linear in time between steps; the propagator is exact
    for that interpolant.
    """

    def __init__(self, modes: ModalData, data: InitialData, pts, dt):
        self.modes = modes
        self.data = data
        self.pts = pts
        self.dt = dt
        self.active = not data.f.is_zero and modes.count > 0
        shape = (modes.count,) + pts.shape[:-1]
        self.q = np.zeros(shape)
        self.p = np.zeros(shape)
        mu = modes.mu
        self._c = np.cos(mu * dt)
        self._s = np.sin(mu * dt)
        self.n = 0
        self._g = self._proj(0.0) if self.active else None

    def _proj(self, t):
        return np.einsum("ik,...k->i...", self.modes.hbar, self.data.f_at(self.pts, t))

    def advance(self):
        self.n += 1
        if not self.active:
            return
        mu, C, S, d = self.modes.mu, self._c, self._s, self.dt
        g0 = self._g
        g1 = self._proj(self.n * d)
        slope = (g1 - g0) / d
        sh = (slice(None),) + (None,) * (self.q.ndim - 1)
        mu_, C_, S_ = mu[sh], C[sh], S[sh]
        q_new = C_ * self.q + S_ * self.p / mu_ + g0 * (1 - C_) / mu_**2 + slope * (d / mu_ - S_ / mu_**2) / mu_
        p_new = -mu_ * S_ * self.q + C_ * self.p + g0 * S_ / mu_ + slope * (1 - C_) / mu_**2
        self.q, self.p, self._g = q_new, p_new, g1

    def projections(self):
        """hbar_i · f at the current time, shape (N, ...)."""
        return self._g


def force_time_series(modes: ModalData, xi, t):
    """The three time series T_k with Σ_k v0_k(x) T_k(t) the v0 part of F."""
    t = np.asarray(t, dtype=float)
    a = modes.hbar @ xi
    s = np.sin(np.outer(t, modes.mu))
    return s @ ((modes.mu * a - modes.coupling / modes.mu)[:, None] * modes.hbar)


class MemoryForce:
    """Evaluates F(t_n, x) step by step on the macro grid."""

    def __init__(self, data: InitialData, modes: ModalData, coeffs: HomogenizedCoefficients,
                 grid: MacroGrid, dt):
        self.data, self.modes, self.grid, self.dt = data, modes, grid, dt
        self.xi = np.asarray(coeffs.xi, dtype=float)
        pts = grid.points()
        self.pts = pts
        self.v0 = data.v0_at(pts)
        self.div_term = data.strain_divergence(voigt_to_full(coeffs.A1star), self.xi, pts)
        self.quad = ForceIntegrator(modes, data, pts, dt)
        self.a_xi = modes.hbar @ self.xi

    def current(self):
        """F at the integrator's current time."""
        t = self.quad.n * self.dt
        F = self.div_term.copy()
        if self.modes.count == 0:
            return F
        if not self.data.v0.is_zero:
            F += self.v0 @ force_time_series(self.modes, self.xi, [t])[0]
        if self.quad.active:
            mu, c = self.modes.mu, self.modes.coupling
            g = self.quad.projections()
            q = self.quad.q
            F -= np.tensordot(self.a_xi, g, axes=1)
            F += np.tensordot(self.a_xi * mu**2 - c, q, axes=1)
        return F

    def advance(self):
        self.quad.advance()


def assemble_forcing_F(data: InitialData, modes: ModalData, coeffs: HomogenizedCoefficients,
                       grid: MacroGrid, t_grid):
    """F on every node at every time of ``t_grid`` (uniform, starting at 0)."""
    t = np.asarray(t_grid, dtype=float)
    dt = t[1] - t[0]
    mf = MemoryForce(data, modes, coeffs, grid, dt)
    out = np.empty((len(t),) + grid.shape)
    for n in range(len(t)):
        out[n] = mf.current()
        if n + 1 < len(t):
            mf.advance()
    return out


# --------------------------------------------------------------------------
# time stepping


@dataclass
class MacroState:
    alpha: np.ndarray
    alpha_prev: np.ndarray
    w: np.ndarray
    w_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    n: int = 0


class MacroProblem:
    """Discrete homogenized equation with spatially constant coefficients."""

    def __init__(self, coeffs: HomogenizedCoefficients, modes: ModalData, grid: MacroGrid, dt,
                 fixed_point_tol=1e-14, max_fixed_point=200):
        self.coeffs, self.modes, self.grid, self.dt = coeffs, modes, grid, float(dt)
        self.xi = np.asarray(coeffs.xi, dtype=float)
        self.a = (modes.hbar @ self.xi) ** 2
        self.kappa = modes.coupling * (modes.hbar @ self.xi)
        mu = modes.mu
        self.C = np.cos(mu * dt)
        self.S = np.sin(mu * dt)
        self.sigma = self.S / (mu * dt) if mu.size else np.zeros(0)
        self.M_eff = coeffs.Mstar - float(self.a @ self.sigma)
        self.M_low = coeffs.Mstar - float(self.a.sum())
        if self.M_low <= 0:
            raise ConfigError(f"instantaneous mass M* - ΣK = {self.M_low:g} is not positive")
        self.lam = np.asarray(coeffs.lambdastar, dtype=float)
        self.tol, self.maxit = fixed_point_tol, max_fixed_point
        limit = self.stable_dt()
        if self.dt > limit:
            raise StabilityError(f"macro dt={self.dt:g} exceeds the stable limit {limit:g}")

    def stable_dt(self):
        bound = gershgorin_bound(self.grid, self.coeffs.A1dir, self.coeffs.cstar)
        return 2.0 / np.sqrt(bound / self.M_low)

    def _bc(self, arr):
        return arr[(slice(None),) + (None,) * 3]

    def spatial(self, alpha):
        return div_aniso(self.grid, self.coeffs.A1dir, alpha) - self.coeffs.cstar * alpha

    def initial_state(self, alpha_dot0=None):
        shape = self.grid.shape
        z = np.zeros(shape)
        N = self.modes.count
        st = MacroState(alpha=z.copy(), alpha_prev=z.copy(), w=z.copy(), w_prev=z.copy(),
                        r=np.zeros((N,) + shape), z=np.zeros((N,) + shape))
        st.alpha_dot0 = np.zeros(shape) if alpha_dot0 is None else np.asarray(alpha_dot0, dtype=float)
        return st

    def _rhs_terms(self, st, source):
        R = self.spatial(st.alpha) + source
        if self.modes.count:
            R += np.tensordot(self.kappa, st.r, axes=1)
            rho = np.tensordot(self.a, self._bc(self.C) * st.r - self._bc(self.S) * st.z, axes=1) \
                - float(self.a @ self.sigma) * st.alpha
        else:
            rho = np.zeros_like(st.alpha)
        return R, rho

    def _solve_drift(self, rhs):
        """(M_eff + dt/2 λ·∇) α = rhs by fixed-point iteration."""
        x = rhs / self.M_eff
        if not np.any(self.lam):
            return x
        for _ in range(self.maxit):
            x_new = (rhs - 0.5 * self.dt * drift(self.grid, self.lam, x)) / self.M_eff
            if np.abs(x_new - x).max() <= self.tol * max(np.abs(x_new).max(), 1e-300):
                return x_new
            x = x_new
        raise StabilityError("drift fixed-point iteration did not converge; reduce dt")

    def step(self, st: MacroState, source):
        """Advance one step; ``source`` is μ*·f + F at the current time."""
        dt = self.dt
        R, rho = self._rhs_terms(st, source)
        if st.n == 0:
            wdot0 = self.M_low * st.alpha_dot0
            w_next = st.w + dt * wdot0 + 0.5 * dt**2 * (R - drift(self.grid, self.lam, st.alpha_dot0))
            alpha_next = (w_next + rho) / self.M_eff
        else:
            rhs = dt**2 * R + 2 * st.w - st.w_prev + rho + 0.5 * dt * drift(self.grid, self.lam, st.alpha_prev)
            alpha_next = self._solve_drift(rhs)
        beta = (alpha_next - st.alpha) / dt
        if self.modes.count:
            mu = self._bc(self.modes.mu)
            C, S = self._bc(self.C), self._bc(self.S)
            r_next = C * st.r - S * st.z + beta * S / mu
            z_next = S * st.r + C * st.z + beta * (1 - C) / mu
        else:
            r_next, z_next = st.r, st.z
        w_next = self.coeffs.Mstar * alpha_next - np.tensordot(self.a, r_next, axes=1)
        new = MacroState(alpha=alpha_next, alpha_prev=st.alpha, w=w_next, w_prev=st.w, r=r_next, z=z_next,
                         n=st.n + 1)
        new.alpha_dot0 = st.alpha_dot0
        return new


def step_macro(state: MacroState, problem: MacroProblem, source):
    return problem.step(state, source)


@dataclass
class MacroHistory:
    """Snapshots of α and of the memory vectors at recorded steps."""

    t: np.ndarray
    alpha: np.ndarray                       # (ns, *grid)
    mem_vec: np.ndarray = field(repr=False)  # (ns, *grid, 3): Σ hbar_i (hbar_i·ξ) r_i
    mem_f: np.ndarray = field(repr=False)    # (ns, *grid, 3): Σ hbar_i q_i
    stats: dict = field(default_factory=dict)


def run_macro(problem: MacroProblem, T, source=None, data: InitialData | None = None,
              record_every=1, alpha_dot0=None):
    """Integrate to time T.

    ``source(t)`` gives the right-hand side field; otherwise it is built from
    ``data`` as μ*·f + F.
    """
    dt = problem.dt
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1):
        raise ConfigError(f"T={T} is not a whole number of macro steps dt={dt}")
    grid = problem.grid
    mf = None
    pts = grid.points()
    if source is None:
        if data is None:
            raise ConfigError("run_macro needs either a source or initial data")
        mf = MemoryForce(data, problem.modes, problem.coeffs, grid, dt)
        mustar = np.asarray(problem.coeffs.mustar)

        def source(t):
            F = mf.current()
            if not data.f.is_zero:
                F = F + data.f_at(pts, t) @ mustar
            return F

    st = problem.initial_state(alpha_dot0)
    times, snaps, mems, memf = [], [], [], []
    stats = {"t": [], "alpha_mean": [], "alpha_max": []}
    H = problem.modes.hbar * (problem.modes.hbar @ problem.xi)[:, None]

    def record(state, n):
        times.append(n * dt)
        snaps.append(state.alpha.copy())
        mems.append(np.tensordot(state.r, H, axes=(0, 0)) if problem.modes.count else
                    np.zeros(state.alpha.shape + (3,)))
        if mf is not None and mf.quad.active:
            memf.append(np.tensordot(mf.quad.q, problem.modes.hbar, axes=(0, 0)))
        else:
            memf.append(np.zeros(state.alpha.shape + (3,)))

    ref = None
    for n in range(nsteps + 1):
        stats["t"].append(n * dt)
        stats["alpha_mean"].append(float(st.alpha.mean()))
        stats["alpha_max"].append(float(np.abs(st.alpha).max()))
        if n % record_every == 0 or n == nsteps:
            record(st, n)
        if n == nsteps:
            break
        src = source(n * dt)
        st = problem.step(st, src)
        if mf is not None:
            mf.advance()
        amax = np.abs(st.alpha).max()
        if not np.isfinite(amax):
            raise StabilityError(f"macro solution became non-finite at step {n + 1}")
        if n < 10:
            ref = max(ref or 0.0, amax, dt**2 * np.abs(src).max())
        elif ref and amax > GROWTH_LIMIT * ref:
            raise StabilityError(f"macro solution grew by more than {GROWTH_LIMIT:g} at step {n + 1}")
    return MacroHistory(np.array(times), np.array(snaps), np.array(mems), np.array(memf), stats)


# --------------------------------------------------------------------------
# reconstruction of the limits


def kbarbar_v0(modes: ModalData, v0, t):
    """Σ hbar_i sin(μ_i t)/μ_i (hbar_i·v0) for a field v0 (..., 3)."""
    w = np.sin(modes.mu * t) / modes.mu
    M = np.einsum("i,ij,ik->jk", w, modes.hbar, modes.hbar)
    return v0 @ M.T


def _phase_limits(out, vol_matrix):
    out = {k: np.asarray(v) for k, v in out.items()}
    out["hard_phase"] = vol_matrix * out["u1"]
    out["soft_phase"] = (1.0 - vol_matrix) * out["u1"] + out["u2_avg"]
    return out


def reconstruct_limits(history: MacroHistory, data: InitialData, coeffs: HomogenizedCoefficients,
                       modes: ModalData, grid: MacroGrid, ubar_xi=False, example_case=False):
    """u1, ∫_{Y2}u2, the weak limit ū and the stress A1dir∇α at each snapshot.

    ``ubar_xi`` adds ū·ξ, which has the closed form used here only when b = γξ.
    """
    if ubar_xi and not example_case:
        raise UnsupportedError("ū·ξ is only available when b = γξ on the whole cell")
    pts = grid.points()
    u0 = data.u0_at(pts)
    v0 = data.v0_at(pts)
    xi = np.asarray(coeffs.xi, dtype=float)
    out = {"t": history.t, "u1": [], "u2_avg": [], "ubar": [], "sigma": []}
    for k, t in enumerate(history.t):
        a = history.alpha[k]
        u1 = u0 + a[..., None] * xi
        u2 = history.mem_f[k] - history.mem_vec[k] - a[..., None] * (coeffs.perp_int @ xi)
        if modes.count:
            u2 = u2 + kbarbar_v0(modes, v0, t)
        grad = np.stack([(grid.shift(a, j, 1) - grid.shift(a, j, -1)) / (2 * grid.h) for j in range(3)], axis=-1)
        out["u1"].append(u1)
        out["u2_avg"].append(u2)
        out["ubar"].append(u1 + u2)
        out["sigma"].append(grad @ coeffs.A1dir.T)
    out = _phase_limits(out, coeffs.vol_matrix)
    if ubar_xi:
        out["ubar_xi"] = out["ubar"] @ xi
    return out


def frozen_limits(data: InitialData, modes: ModalData, grid: MacroGrid, t_grid, vol_matrix):
    """Limits when the hard phase is frozen: u1 = u0 and ∫u2 = K̄̄ v0 + ∫K̄̄ f."""
    t = np.asarray(t_grid, dtype=float)
    pts = grid.points()
    u0, v0 = data.u0_at(pts), data.v0_at(pts)
    quad = ForceIntegrator(modes, data, pts, t[1] - t[0])
    out = {"t": t, "u1": [], "u2_avg": [], "ubar": []}
    for n, tn in enumerate(t):
        u2 = np.zeros_like(u0)
        if modes.count:
            u2 += kbarbar_v0(modes, v0, tn)
            if quad.active:
                u2 += np.tensordot(quad.q, modes.hbar, axes=(0, 0))
        out["u1"].append(u0)
        out["u2_avg"].append(u2)
        out["ubar"].append(u0 + u2)
        if n + 1 < len(t):
            quad.advance()
    return _phase_limits(out, vol_matrix)
