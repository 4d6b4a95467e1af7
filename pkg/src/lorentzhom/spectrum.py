"""Lowest modes of the constrained inclusion eigenproblem  S s = mu^2 M s."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import io
from .errors import ConvergenceError, FingerprintError
from .perfem import InclusionForms, cg_solve

DENSE_LIMIT = 5000


@dataclass(frozen=True)
class ModeSet:
    """Modes sorted by increasing frequency; ``s[:, i]`` is M-orthonormal."""

    mu: np.ndarray                 # (N,)
    s: np.ndarray = field(repr=False)   # (ndof, N)
    hbar: np.ndarray               # (N, 3), ∫_{Y2} s_i bhat
    coupling: np.ndarray           # (N,), ∫ A2 e(h_i):e(bhat)
    fingerprint: str

    @property
    def count(self):
        return self.mu.size

    def truncate(self, N):
        N = min(int(N), self.count)
        return ModeSet(self.mu[:N], self.s[:, :N], self.hbar[:N], self.coupling[:N], self.fingerprint)

    def weights(self, xi):
        """a_i = (hbar_i . xi)^2."""
        return (self.hbar @ np.asarray(xi, dtype=float)) ** 2

    def digest(self):
        d = hashlib.sha256()
        for a in (self.mu, self.hbar, self.coupling):
            d.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return d.hexdigest()[:16]

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for i in range(self.count):
            io.write_raw(directory / f"mode_{i:04d}.raw", self.s[:, i], mu=float(self.mu[i]))
        io.write_json(directory / "modes.json", {
            "N": self.count,
            "mu": self.mu.tolist(),
            "hbar": self.hbar.tolist(),
            "coupling": self.coupling.tolist(),
            "fingerprint": self.fingerprint,
        })

    @classmethod
    def load(cls, directory, fingerprint=None):
        directory = Path(directory)
        meta = io.read_json(directory / "modes.json")
        if fingerprint is not None and meta["fingerprint"] != fingerprint:
            raise FingerprintError(
                f"modes in {directory} were built for {meta['fingerprint']}, expected {fingerprint}"
            )
        s = np.stack([io.read_raw(directory / f"mode_{i:04d}.raw")[0] for i in range(meta["N"])], axis=1)
        return cls(np.array(meta["mu"]), s, np.array(meta["hbar"]).reshape(-1, 3),
                   np.array(meta["coupling"]), meta["fingerprint"])


def _fix_signs(vecs):
    for i in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, i]) > 1e-10 * np.abs(vecs[:, i]).max())
        if nz.size and vecs[nz[0], i] < 0:
            vecs[:, i] *= -1
    return vecs


def _dense_modes(forms, N):
    S = forms.S.to_sparse().toarray()
    M = forms.M.to_sparse().toarray()
    lam, vecs = sla.eigh(S, M, subset_by_index=[0, N - 1], driver="gvx")
    return lam, vecs


def _iterative_modes(forms, N, tol):
    """Shift-invert Lanczos at zero; the inverse is applied by CG."""
    S, M = forms.S, forms.M
    n = forms.ndof
    solves = spla.LinearOperator((n, n), matvec=lambda x: cg_solve(S, x, tol=tol * 1e-2), dtype=float)
    v0 = np.random.default_rng(12345).standard_normal(n)
    try:
        lam, vecs = spla.eigsh(S.as_linear_operator(), k=N, M=M.as_linear_operator(), sigma=0.0,
                               OPinv=solves, which="LM", v0=v0, tol=tol, maxiter=max(1000, 20 * N))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"eigensolver stagnated: {len(exc.eigenvalues)} of {N} modes converged") from exc
    order = np.argsort(lam)
    lam, vecs = lam[order], vecs[:, order]
    # M-orthonormalize (ARPACK returns M-orthogonal vectors up to its tolerance)
    G = vecs.T @ M.apply(vecs)
    L = np.linalg.cholesky(G)
    vecs = np.linalg.solve(L, vecs.T).T
    return lam, vecs


def solve_modes(forms: InclusionForms, count: int, method="auto", tol=1e-12) -> ModeSet:
    """The ``count`` lowest constrained modes with their cell averages."""
    N = int(count)
    if N < 1:
        raise ValueError("need at least one mode")
    if N > forms.ndof:
        raise ConvergenceError(f"requested {N} modes but the inclusion space has dimension {forms.ndof}")
    if method == "auto":
        method = "dense" if forms.ndof <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        lam, vecs = _dense_modes(forms, N)
    elif method == "lanczos":
        lam, vecs = _iterative_modes(forms, N, tol)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    if np.any(lam <= 0):
        raise ConvergenceError(f"nonpositive constrained eigenvalue {lam.min():.3g}")
    vecs = _fix_signs(np.array(vecs))
    mu = np.sqrt(lam)
    hbar = vecs.T @ forms.hbar_weights
    coupling = vecs.T @ forms.coupling_weights
    return ModeSet(mu=mu, s=vecs, hbar=hbar, coupling=coupling, fingerprint=forms.fingerprint)


def mode_residuals(modes: ModeSet, forms: InclusionForms):
    """Relative eigen-residuals and the M-orthonormality defect."""
    Ss = forms.S.apply(modes.s)
    Ms = forms.M.apply(modes.s)
    res = np.linalg.norm(Ss - Ms * modes.mu**2, axis=0) / np.linalg.norm(Ms, axis=0)
    ortho = np.abs(modes.s.T @ Ms - np.eye(modes.count)).max()
    return res, float(ortho)


def sum_rule_defect(modes: ModeSet, forms: InclusionForms, N=None):
    """∫|bhat|² − Σ_{i<N} (hbar_i·ξ)²; nonnegative and nonincreasing in N."""
    a = modes.weights(forms.xi)
    if N is not None:
        a = a[:N]
    return float(forms.bhat_sq - a.sum())
