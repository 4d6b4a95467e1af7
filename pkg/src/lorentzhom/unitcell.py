"""Voxelized periodic unit cell, inclusion geometry and the magnetic field."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import FieldError, GeometryError
from .expr import Expression, VectorExpression
from .fem import GAUSS_POINTS, LOCAL_OFFSETS, SHAPE_AT_GAUSS

COMPAT_TOL = 1e-10
RANK_TOL = 1e-6
NEGLIGIBLE_FRACTION = 0.01


@dataclass(frozen=True)
class CellGeometry:
    """Voxel grid of Y = (0,1)^3 with the inclusion mask (True on Y2)."""

    n: int
    inclusion_mask: np.ndarray = field(repr=False)

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def voxel_volume(self):
        return 1.0 / self.n**3

    @property
    def n_inclusion(self):
        return int(self.inclusion_mask.sum())

    @property
    def vol_inclusion(self):
        return self.n_inclusion * self.voxel_volume

    @property
    def vol_matrix(self):
        return (self.n**3 - self.n_inclusion) * self.voxel_volume

    @property
    def is_empty(self):
        return self.n_inclusion == 0

    def fingerprint(self):
        digest = hashlib.sha256()
        digest.update(str(self.n).encode())
        digest.update(np.packbits(self.inclusion_mask.ravel()).tobytes())
        return digest.hexdigest()[:16]

    def voxel_centers(self):
        c = (np.arange(self.n) + 0.5) * self.h
        return np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1)

    def gauss_points(self):
        """Physical Gauss points, shape (n, n, n, 8, 3)."""
        corner = np.arange(self.n) * self.h
        base = np.stack(np.meshgrid(corner, corner, corner, indexing="ij"), axis=-1)
        return base[..., None, :] + GAUSS_POINTS * self.h

    def node_phase_counts(self):
        """Number of adjacent inclusion voxels of each periodic node, shape (n, n, n)."""
        m = self.inclusion_mask.astype(np.int64)
        count = np.zeros_like(m)
        for off in LOCAL_OFFSETS:
            count += np.roll(m, shift=tuple(off), axis=(0, 1, 2))
        return count

    def interior_inclusion_nodes(self):
        """Mask of nodes whose eight neighbouring voxels all lie in Y2."""
        return self.node_phase_counts() == 8

    def interface_nodes(self):
        c = self.node_phase_counts()
        return (c > 0) & (c < 8)

    def closure_inclusion_nodes(self):
        return self.node_phase_counts() > 0


def build_geometry(config) -> CellGeometry:
    """Voxelize a cube or ball inclusion and validate the cell assumptions.

    ``config`` holds ``shape`` ("cube", "ball" or "none"), ``center``,
    ``size`` (cube side) or ``radius`` (ball), and ``n``.
    """
    n = int(config["n"])
    if n < 8:
        raise GeometryError(f"need at least 8 voxels per axis, got n={n}")
    shape = config.get("shape", "cube")
    h = 1.0 / n
    x = (np.arange(n) + 0.5) * h
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1)
    if shape == "none":
        mask = np.zeros((n, n, n), dtype=bool)
    else:
        center = np.asarray(config.get("center", (0.5, 0.5, 0.5)), dtype=float)
        if shape == "cube":
            half = 0.5 * float(config["size"])
            lo, hi = center - half, center + half
            mask = np.all((X > lo) & (X < hi), axis=-1)
        elif shape == "ball":
            r = float(config["radius"])
            lo, hi = center - r, center + r
            mask = np.sum((X - center) ** 2, axis=-1) < r * r
        else:
            raise GeometryError(f"unknown inclusion shape {shape!r}")
        if np.any(lo <= 0.0) or np.any(hi >= 1.0):
            raise GeometryError(
                f"inclusion touches the cell boundary: extent [{lo.min():.3g}, {hi.max():.3g}] not inside (0,1)"
            )
        if not mask.any():
            raise GeometryError("inclusion is smaller than one voxel")
        border = np.zeros_like(mask)
        border[[0, -1], :, :] = border[:, [0, -1], :] = border[:, :, [0, -1]] = True
        if np.any(mask & border):
            raise GeometryError("inclusion touches the cell boundary: needs a one-voxel margin")
    mask.setflags(write=False)
    geom = CellGeometry(n=n, inclusion_mask=mask)
    if not _matrix_connected(mask):
        raise GeometryError("matrix phase Y1 is not connected")
    return geom


def _matrix_connected(mask):
    n = mask.shape[0]
    idx = np.arange(n**3).reshape(n, n, n)
    free = ~mask
    rows, cols = [], []
    for axis in range(3):
        nb = np.roll(idx, -1, axis=axis)
        both = free & np.roll(free, -1, axis=axis)
        rows.append(idx[both])
        cols.append(nb[both])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    g = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n**3, n**3))
    _, labels = connected_components(g, directed=False)
    return np.unique(labels[free.ravel()]).size == 1


@dataclass(frozen=True)
class FieldSpec:
    """Magnetic field b on Y.

    ``fixed_direction``: b = gamma(y) xi. ``general``: three component
    expressions; ``xi`` then fixes the direction used for the projected
    field bhat (defaults to the dominant interface direction).
    ``support="inclusion"`` sets b to zero on Y1.
    """

    kind: str
    gamma: Expression | None = None
    components: VectorExpression | None = None
    xi: np.ndarray | None = None
    support: str = "cell"

    @classmethod
    def from_config(cls, cfg) -> "FieldSpec":
        kind = cfg.get("kind", "fixed_direction")
        support = cfg.get("support", "cell")
        if support not in ("cell", "inclusion"):
            raise FieldError(f"support must be 'cell' or 'inclusion', got {support!r}")
        xi = cfg.get("direction", cfg.get("xi"))
        if xi is not None:
            xi = np.asarray(xi, dtype=float)
            if xi.shape != (3,) or abs(np.linalg.norm(xi) - 1.0) > 1e-12:
                raise FieldError(f"direction must be a unit 3-vector, got {xi.tolist()}")
        if kind == "fixed_direction":
            if xi is None:
                raise FieldError("fixed_direction field needs 'direction'")
            return cls(kind=kind, gamma=Expression(cfg["gamma"]), xi=xi, support=support)
        if kind == "general":
            return cls(kind=kind, components=VectorExpression(cfg["components"]), xi=xi, support=support)
        raise FieldError(f"unknown field kind {kind!r}")

    def evaluate(self, pts):
        """b at points of shape (..., 3), without the support restriction."""
        y1, y2, y3 = pts[..., 0], pts[..., 1], pts[..., 2]
        if self.kind == "fixed_direction":
            return self.gamma(y1, y2, y3)[..., None] * self.xi
        return self.components(y1, y2, y3)

    def describe(self):
        d = {"kind": self.kind, "support": self.support}
        if self.gamma is not None:
            d["gamma"] = self.gamma.source
        if self.components is not None:
            d["components"] = self.components.sources
        if self.xi is not None:
            d["xi"] = self.xi.tolist()
        return d


@dataclass(frozen=True)
class SampledField:
    """b at every Gauss point of the cell and bhat at the nodes of closure(Y2).

    Arrays use the voxel layout (n, n, n, ...) with x-major ordering, z fastest.
    """

    b_gauss: np.ndarray = field(repr=False)       # (n,n,n,8,3), zero on Y1 if support="inclusion"
    b_gauss_raw: np.ndarray = field(repr=False)   # (n,n,n,8,3), unrestricted
    bhat_nodes: np.ndarray = field(repr=False)    # (n,n,n,3) periodic nodes, zero off closure(Y2)
    xi: np.ndarray
    matrix_integral: np.ndarray
    fingerprint: str


def _unit_or_nan(v, scale):
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nrm > 1e-12 * scale, v / nrm, np.nan)


def sample_field(spec: FieldSpec, geom: CellGeometry) -> SampledField:
    """Sample b, check the compatibility conditions and form bhat = (b⊗b/|b|²)ξ."""
    n = geom.n
    pts = geom.gauss_points()
    b_raw = spec.evaluate(pts)
    if not np.all(np.isfinite(b_raw)):
        raise FieldError("field has non-finite values")
    b = b_raw.copy()
    if spec.support == "inclusion":
        b[~geom.inclusion_mask] = 0.0
    binf = float(np.abs(b).max())
    w = geom.voxel_volume / 8.0
    matrix_integral = b[~geom.inclusion_mask].sum(axis=(0, 1)) * w
    scale = max(binf * geom.vol_matrix, 1e-300)
    if np.linalg.norm(matrix_integral) > COMPAT_TOL * scale:
        raise FieldError(
            "compatibility violated: integral of b over Y1 = "
            f"{matrix_integral.tolist()} (tolerance {COMPAT_TOL:g} x {scale:.3g})"
        )

    node_pts = np.stack(np.meshgrid(*(np.arange(n) * geom.h,) * 3, indexing="ij"), axis=-1)
    closure = geom.closure_inclusion_nodes()
    if geom.is_empty:
        xi = spec.xi if spec.xi is not None else np.array([0.0, 0.0, 1.0])
        bhat = np.zeros((n, n, n, 3))
        fp = _field_fingerprint(spec, geom, xi)
        return SampledField(b, b_raw, bhat, xi, matrix_integral, fp)

    inc_b = b_raw[geom.inclusion_mask].reshape(-1, 3)
    inc_norm = np.linalg.norm(inc_b, axis=-1)
    inc_scale = inc_norm.max()
    if inc_scale == 0.0 or np.mean(inc_norm <= 1e-12 * inc_scale) > NEGLIGIBLE_FRACTION:
        raise FieldError("b vanishes on a non-negligible part of the inclusion")

    xi = spec.xi if spec.xi is not None else _dominant_direction(spec, geom)
    if spec.kind == "fixed_direction":
        bhat = np.where(closure[..., None], xi, 0.0)
    else:
        bn = spec.evaluate(node_pts)
        d = _unit_or_nan(bn, inc_scale)
        bhat = np.einsum("...i,...j,j->...i", d, d, xi)
        bad = closure & np.isnan(bhat[..., 0])
        if bad.any():
            # nodes where b vanishes: average the projector over adjacent Y2 Gauss points
            dg = _unit_or_nan(b_raw, inc_scale)
            pg = np.einsum("...qi,...qj,j->...qi", dg, dg, xi)
            acc = np.zeros((n, n, n, 3))
            cnt = np.zeros((n, n, n))
            for q, off in enumerate(LOCAL_OFFSETS):
                ok = geom.inclusion_mask & ~np.isnan(pg[..., q, 0])
                val = np.where(ok[..., None], pg[..., q, :], 0.0)
                acc += np.roll(val, shift=tuple(off), axis=(0, 1, 2))
                cnt += np.roll(ok, shift=tuple(off), axis=(0, 1, 2))
            fill = acc / np.maximum(cnt, 1)[..., None]
            if np.any(cnt[bad] == 0):
                raise FieldError("bhat undefined at inclusion nodes where b vanishes")
            bhat[bad] = fill[bad]
        bhat = np.where(closure[..., None], np.nan_to_num(bhat), 0.0)
    bq = np.einsum("qa,...ai->...qi", SHAPE_AT_GAUSS, _gather_nodes(bhat))
    if np.mean(np.linalg.norm(bq[geom.inclusion_mask], axis=-1) <= 1e-8) > NEGLIGIBLE_FRACTION:
        raise FieldError("projected field bhat vanishes on part of Y2 (b perpendicular to xi)")
    fp = _field_fingerprint(spec, geom, xi)
    return SampledField(b, b_raw, bhat, xi, matrix_integral, fp)


def _gather_nodes(nodal):
    """Periodic nodal array (n,n,n,...) -> per-voxel corner values (n,n,n,8,...)."""
    parts = [np.roll(nodal, shift=tuple(-o for o in off), axis=(0, 1, 2)) for off in LOCAL_OFFSETS]
    return np.stack(parts, axis=3)


def _dominant_direction(spec, geom):
    pts, _ = _interface_points(geom)
    bvals = spec.evaluate(pts)
    _, s, vt = np.linalg.svd(bvals, full_matrices=False)
    xi = vt[0]
    k = np.argmax(np.abs(xi))
    return xi * np.sign(xi[k])


def _interface_points(geom):
    nodes = geom.interface_nodes()
    idx = np.argwhere(nodes)
    return idx * geom.h, idx


def _field_fingerprint(spec, geom, xi):
    payload = json.dumps({"field": spec.describe(), "xi": np.asarray(xi).tolist(), "geom": geom.fingerprint()},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def boundary_direction_rank(spec: FieldSpec, geom: CellGeometry):
    """Numerical rank of span{b(y) : y on the interface}, and the leading direction.

    Rank 1 means b has a fixed direction on the interface; rank >= 2 means
    the hard phase is frozen in the limit.
    """
    pts, _ = _interface_points(geom)
    if pts.shape[0] == 0:
        raise GeometryError("empty interface: no inclusion")
    bvals = spec.evaluate(pts)
    _, s, vt = np.linalg.svd(bvals, full_matrices=False)
    if s[0] == 0.0:
        raise FieldError("b vanishes on the whole interface")
    rank = int(np.sum(s > RANK_TOL * s[0]))
    xi = vt[0] * np.sign(vt[0][np.argmax(np.abs(vt[0]))])
    return rank, xi
