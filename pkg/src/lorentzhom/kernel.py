"""Memory kernel contractions, the wave-equation oracle and the Volterra resolvent."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, StabilityError
from .fem import scalar_mass, scalar_stiffness, voxel_corner_ids
from .perfem import ElasticTensor, ElementOperator
from .spectrum import ModeSet
from .unitcell import CellGeometry


def time_grid(T, dt):
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigError(f"T={T} is not a whole number of steps dt={dt}")
    return np.arange(steps + 1) * dt


@dataclass
class KernelBundle:
    t: np.ndarray
    kbar1: np.ndarray                       # Σ a_i cos(mu_i t)
    kbar1_prime: np.ndarray                 # -Σ a_i mu_i sin(mu_i t)
    kbarbar: np.ndarray = field(repr=False)  # (nt, 3, 3) Σ sin(mu_i t)/mu_i hbar_i⊗hbar_i
    mu: np.ndarray = field(repr=False)
    hbar: np.ndarray = field(repr=False)
    coupling: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)
    fingerprint: str = ""

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def weights(self):
        return (self.hbar @ self.xi) ** 2


def kernel_series(modes: ModeSet, xi, t_grid) -> KernelBundle:
    """Contracted kernels from the modal series."""
    t = np.asarray(t_grid, dtype=float)
    xi = np.asarray(xi, dtype=float)
    mu = np.asarray(modes.mu, dtype=float)
    a = (modes.hbar @ xi) ** 2
    arg = np.outer(t, mu)
    c, s = np.cos(arg), np.sin(arg)
    kbar1 = c @ a
    kprime = -(s @ (a * mu))
    outer = np.einsum("ni,nj->nij", modes.hbar, modes.hbar)
    kbb = np.einsum("tn,nij->tij", s / mu, outer)
    return KernelBundle(t=t, kbar1=kbar1, kbar1_prime=kprime, kbarbar=kbb, mu=mu, hbar=modes.hbar,
                        coupling=modes.coupling, xi=xi, fingerprint=modes.fingerprint)


def _wave_operator(A2: ElasticTensor, geom: CellGeometry, xi):
    n, h = geom.n, geom.h
    lam_mu = A2.directional(xi)          # Â = A2(·⊙ξ)ξ
    inc_vox = np.flatnonzero(geom.inclusion_mask.ravel())
    corners = voxel_corner_ids(n, periodic=True)[inc_vox]
    interior = np.flatnonzero(geom.interior_inclusion_nodes().ravel())
    local = np.full(n**3, -1, dtype=np.int64)
    local[interior] = np.arange(interior.size)
    ke = scalar_stiffness(lam_mu, h)
    K = ElementOperator(local[corners], np.zeros(inc_vox.size, dtype=np.int64), ke[None], interior.size,
                        kind="inclusion-wave")
    lumped = np.full(interior.size, h**3)
    me = np.diag(scalar_mass(h).sum(axis=1))
    omega2 = np.max(np.linalg.eigvals(np.linalg.solve(me, ke)).real)
    return K, lumped, 2.0 / np.sqrt(omega2)


def wave_stable_dt(A2: ElasticTensor, geom: CellGeometry, xi):
    """Leapfrog stability limit 2/omega_max from the element eigenvalue bound."""
    return _wave_operator(A2, geom, xi)[2]


def kernel_wave_oracle(A2: ElasticTensor, geom: CellGeometry, xi, T, dt=None, cfl=0.9):
    """K̄₁ from the inclusion wave equation with unit initial velocity.

    Leapfrog with lumped mass at ``dt`` (default ``cfl`` times the stable
    limit). Returns the wave time grid and K̄₁ on it; the velocity at step n
    is the centred difference of the displacement.
    """
    K, mass, dt_stable = _wave_operator(A2, geom, xi)
    if dt is None:
        dt = cfl * dt_stable
    elif dt > dt_stable:
        raise StabilityError(f"wave dt={dt:g} exceeds the stable limit {dt_stable:g}")
    nsteps = int(np.ceil(T / dt - 1e-12))
    out = np.empty(nsteps + 1)
    out[0] = geom.vol_inclusion            # velocity 1 on the closed inclusion
    k_prev = np.zeros(K.ndof)
    k = dt * np.ones(K.ndof)               # k(dt) = dt v0 since the initial acceleration vanishes
    for step in range(1, nsteps + 1):
        k_next = 2 * k - k_prev - dt**2 * K.apply(k) / mass
        out[step] = mass @ (k_next - k_prev) / (2 * dt)
        k_prev, k = k, k_next
    if not np.all(np.isfinite(out)):
        raise StabilityError("wave oracle produced non-finite values")
    return np.arange(nsteps + 1) * dt, out


# --------------------------------------------------------------------------
# Volterra equation of the second kind


def _second_kind_coefficient(k0):
    c = 1.0 - k0
    if c <= 0:
        raise ConfigError(f"second-kind coefficient 1 - K(0) = {c:g} is not positive")
    return c


def volterra_resolve(kbar1, g, dt, kbar1_prime=None):
    """Solve (1-K(0)) α(t) - ∫_0^t K'(t-s) α(s) ds = g(t) by the trapezoidal rule.

    ``kbar1_prime`` defaults to second-order differences of the samples.
    """
    K = np.asarray(kbar1, dtype=float)
    g = np.asarray(g, dtype=float)
    Kp = np.gradient(K, dt, edge_order=2) if kbar1_prime is None else np.asarray(kbar1_prime, dtype=float)
    c = _second_kind_coefficient(K[0])
    n = len(g)
    alpha = np.empty(n)
    alpha[0] = g[0] / c
    diag = c - 0.5 * dt * Kp[0]
    if diag <= 0:
        raise ConfigError("time step too large for the trapezoidal Volterra scheme")
    for m in range(1, n):
        hist = 0.5 * Kp[m] * alpha[0]
        if m > 1:
            hist += Kp[m - 1:0:-1] @ alpha[1:m]
        alpha[m] = (g[m] + dt * hist) / diag
    return alpha


def volterra_forward(kbar1, alpha, dt, kbar1_prime=None):
    """The discrete operator that ``volterra_resolve`` inverts."""
    K = np.asarray(kbar1, dtype=float)
    a = np.asarray(alpha, dtype=float)
    Kp = np.gradient(K, dt, edge_order=2) if kbar1_prime is None else np.asarray(kbar1_prime, dtype=float)
    c = 1.0 - K[0]
    g = np.empty_like(a)
    g[0] = c * a[0]
    for m in range(1, len(a)):
        integral = 0.5 * Kp[m] * a[0] + 0.5 * Kp[0] * a[m]
        if m > 1:
            integral += Kp[m - 1:0:-1] @ a[1:m]
        g[m] = c * a[m] - dt * integral
    return g


@dataclass
class ResolventKernel:
    t: np.ndarray
    L: np.ndarray
    coefficient: float      # 1 - K̄₁(0)

    def apply(self, g):
        """α_m = Σ_{j=1}^{m} L_{m-j} g_j; requires g_0 = 0."""
        g = np.asarray(g, dtype=float)
        if g[0] != 0.0:
            raise ValueError("the resolvent acts on data with g(0) = 0")
        n = len(g)
        out = np.zeros(n)
        for m in range(1, n):
            out[m] = self.L[m - 1::-1] @ g[1:m + 1]
        return out


def resolvent_kernel(kbar1, dt, kbar1_prime=None) -> ResolventKernel:
    """Discrete resolvent: the response to a unit impulse at the first step."""
    K = np.asarray(kbar1, dtype=float)
    impulse = np.zeros(len(K) + 1)
    impulse[1] = 1.0
    Kp = None if kbar1_prime is None else np.append(kbar1_prime, 0.0)
    Kx = np.append(K, 0.0)
    if kbar1_prime is None:
        Kp = np.append(np.gradient(K, dt, edge_order=2), 0.0)
    alpha = volterra_resolve(Kx, impulse, dt, Kp)
    L = alpha[1:]
    return ResolventKernel(t=np.arange(len(K)) * dt, L=L, coefficient=1.0 - K[0])
