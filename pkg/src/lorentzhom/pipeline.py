"""Run configuration, the artifact store and the end-to-end studies."""
from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import io, kernels
from .correctors import (HomogenizedCoefficients, corrector_residuals, homogenized_coefficients,
                         solve_correctors)
from .errors import ConfigError, FingerprintError, MissingArtifactError, UnsupportedError
from .finescale import (FineSolver, assemble_fine, cell_average_of_nodal, choose_dt, run_fine)
from .kernel import (kernel_series, kernel_wave_oracle, resolvent_kernel, time_grid, volterra_forward,
                     volterra_resolve)
from .macro import (InitialData, MacroGrid, MacroProblem, ModalData, frozen_limits, reconstruct_limits,
                    run_macro)
from .perfem import ElasticTensor, assemble_constrained_forms
from .spectrum import ModeSet, mode_residuals, solve_modes, sum_rule_defect
from .unitcell import FieldSpec, boundary_direction_rank, build_geometry, sample_field

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# configuration


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Block):
    shape: Literal["cube", "ball", "none"] = "cube"
    center: List[float] = [0.5, 0.5, 0.5]
    size: Optional[float] = None
    radius: Optional[float] = None
    n: int = Field(32, ge=8)

    @model_validator(mode="after")
    def _extent(self):
        if self.shape == "cube" and self.size is None:
            raise ValueError("cube inclusion needs 'size'")
        if self.shape == "ball" and self.radius is None:
            raise ValueError("ball inclusion needs 'radius'")
        if len(self.center) != 3:
            raise ValueError("center must have three coordinates")
        return self


class FieldConfig(_Block):
    kind: Literal["fixed_direction", "general"] = "fixed_direction"
    direction: Optional[List[float]] = None
    gamma: Optional[str] = None
    components: Optional[List[str]] = None
    support: Literal["cell", "inclusion"] = "cell"

    @model_validator(mode="after")
    def _parts(self):
        if self.kind == "fixed_direction" and (self.gamma is None or self.direction is None):
            raise ValueError("fixed_direction field needs 'gamma' and 'direction'")
        if self.kind == "general" and (self.components is None or len(self.components) != 3):
            raise ValueError("general field needs three 'components'")
        return self


class TensorConfig(_Block):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)
    lam: Optional[float] = Field(None, alias="lambda")
    mu: Optional[float] = None
    voigt: Optional[List[List[float]]] = None

    def build(self) -> ElasticTensor:
        if self.voigt is not None:
            return ElasticTensor.from_config({"voigt": self.voigt})
        if self.lam is None or self.mu is None:
            raise ConfigError("tensor needs either 'voigt' or both 'lambda' and 'mu'")
        return ElasticTensor.isotropic(self.lam, self.mu)


class TensorsConfig(_Block):
    A1: TensorConfig
    A2: TensorConfig


class MacroConfig(_Block):
    m: int = Field(16, ge=2)
    dt: Optional[float] = Field(None, gt=0)
    modes: Optional[int] = Field(None, ge=0)


class FineConfig(_Block):
    eps: List[float] = [0.25, 0.125]
    cell_resolution: int = Field(8, ge=8)
    dt: Optional[float] = Field(None, gt=0)
    cfl: float = Field(0.9, gt=0, le=1)
    max_rotation: Optional[float] = Field(1.0, gt=0)


class DiscretizationConfig(_Block):
    modes: int = Field(300, ge=1)
    kernel_dt: float = Field(1e-3, gt=0)
    wave_cfl: float = Field(0.9, gt=0, le=1)
    T: float = Field(1.0, gt=0)
    samples: int = Field(4, ge=1)
    macro: MacroConfig = MacroConfig()
    fine: FineConfig = FineConfig()


class FemConfig(_Block):
    cg_tol: float = Field(1e-10, gt=0)
    cg_maxiter: int = Field(20000, ge=1)
    eig_method: Literal["auto", "dense", "lanczos"] = "auto"


class ScenarioConfig(_Block):
    case: Literal["auto", "frozen", "directional"] = "auto"
    u0: List[str] = ["0", "0", "0"]
    v0: List[str] = ["0", "0", "0"]
    f: List[str] = ["0", "0", "0"]


class RunConfig(_Block):
    geometry: GeometryConfig
    field: FieldConfig
    tensors: TensorsConfig
    discretization: DiscretizationConfig = DiscretizationConfig()
    fem: FemConfig = FemConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    output: Optional[str] = None

    def section(self, *names):
        """Canonical JSON of the named blocks (dotted paths allowed)."""
        d = self.model_dump(mode="json", by_alias=True)
        picked = {}
        for name in names:
            node = d
            for part in name.split("."):
                node = node[part]
            picked[name] = node
        return json.dumps(picked, sort_keys=True)


def load_config(path, modes=None, eps=None) -> RunConfig:
    """Read and validate a JSON run configuration; ``modes``/``eps`` override the file."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw, modes=modes, eps=eps)


def parse_config(raw: dict, modes=None, eps=None) -> RunConfig:
    raw = json.loads(json.dumps(raw))
    disc = raw.setdefault("discretization", {})
    if modes is not None:
        disc["modes"] = int(modes)
    if eps is not None:
        disc.setdefault("fine", {})["eps"] = [float(e) for e in eps]
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid config at '{where}': {first['msg']}") from exc


def _digest(*parts):
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode())
        h.update(b"\0")
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# artifact store


ARTIFACTS = ["cell.json", "modes/modes.json", "coeffs.json", "kernel.csv", "resolvent.csv", "macro.csv",
             "fine.csv", "converge.csv"]


class ArtifactStore:
    """Directory of artifacts, each tied to the fingerprint of its inputs."""

    def __init__(self, root):
        self.root = Path(root)

    def path(self, name):
        return self.root / name

    def exists(self, name):
        return self.path(name).exists()

    def _meta_path(self, name):
        p = self.path(name)
        return p if p.suffix == ".json" else p.with_name(p.name + ".meta.json")

    def write_meta(self, name, fingerprint, **extra):
        p = self._meta_path(name)
        if p == self.path(name):
            raise ValueError("json artifacts carry their fingerprint inline")
        io.write_json(p, {"fingerprint": fingerprint, **extra})

    def fingerprint_of(self, name):
        p = self._meta_path(name)
        if not p.exists():
            raise MissingArtifactError([name])
        return io.read_json(p).get("fingerprint")

    def check(self, name, fingerprint):
        found = self.fingerprint_of(name)
        if found != fingerprint:
            raise FingerprintError(f"{name} is stale: built for {found}, inputs now give {fingerprint}")

    def is_fresh(self, name, fingerprint):
        try:
            self.check(name, fingerprint)
            return True
        except (MissingArtifactError, FingerprintError):
            return False


# --------------------------------------------------------------------------
# orchestration


class Study:
    """Lazily builds every stage for one configuration and persists its artifacts."""

    def __init__(self, cfg: RunConfig, out=None, seed=0):
        self.cfg = cfg
        self.store = ArtifactStore(out if out is not None else (cfg.output or "out"))
        self.seed = int(seed)
        self._cache = {}

    # fingerprints -------------------------------------------------------
    def fp(self, stage):
        c = self.cfg
        base = {
            "cell": lambda: _digest("cell", c.section("geometry", "field")),
            "modes": lambda: _digest("modes", self.fp("cell"), c.section("tensors.A2", "discretization.modes",
                                                                          "fem.eig_method")),
            "correctors": lambda: _digest("correctors", self.fp("cell"), c.section("tensors.A1", "fem")),
            "coeffs": lambda: _digest("coeffs", self.fp("correctors"), self.fp("modes")),
            "kernel": lambda: _digest("kernel", self.fp("modes"), self.fp("coeffs"),
                                      c.section("discretization.kernel_dt", "discretization.wave_cfl",
                                                "discretization.T")),
            "macro": lambda: _digest("macro", self.fp("kernel"),
                                     c.section("discretization.macro", "discretization.samples", "scenario")),
            "fine": lambda: _digest("fine", self.fp("cell"),
                                    c.section("tensors", "discretization.fine", "discretization.T",
                                              "discretization.samples", "scenario")),
            "converge": lambda: _digest("converge", self.fp("fine"), self.fp("macro")),
        }
        if stage not in base:
            raise KeyError(stage)
        return base[stage]()

    def _memo(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # cell ---------------------------------------------------------------
    @property
    def spec(self):
        return self._memo("spec", lambda: FieldSpec.from_config(self.cfg.field.model_dump(exclude_none=True)))

    @property
    def geom(self):
        return self._memo("geom", lambda: build_geometry(self.cfg.geometry.model_dump(exclude_none=True)))

    @property
    def field(self):
        return self._memo("field", lambda: sample_field(self.spec, self.geom))

    @property
    def A1(self):
        return self.cfg.tensors.A1.build()

    @property
    def A2(self):
        return self.cfg.tensors.A2.build()

    @property
    def is_example(self):
        """b = γξ with γ = 0 on the matrix: the closed-form reconstruction applies."""
        f = self.cfg.field
        return f.kind == "fixed_direction" and f.support == "inclusion"

    def case(self):
        if self.cfg.scenario.case != "auto":
            return self.cfg.scenario.case
        rank, _ = self.rank()
        return "frozen" if rank >= 2 else "directional"

    def rank(self):
        return self._memo("rank", lambda: boundary_direction_rank(self.spec, self.geom))

    def cell(self):
        geom, fld = self.geom, self.field
        rank, xi_dom = self.rank()
        info = {
            "fingerprint": self.fp("cell"),
            "n": geom.n,
            "vol_matrix": geom.vol_matrix,
            "vol_inclusion": geom.vol_inclusion,
            "xi": fld.xi,
            "interface_rank": rank,
            "interface_direction": xi_dom,
            "matrix_integral_b": fld.matrix_integral,
            "case": self.case(),
            "field": self.spec.describe(),
        }
        io.write_json(self.store.path("cell.json"), info)
        return info

    # modes --------------------------------------------------------------
    @property
    def forms(self):
        if self.geom.is_empty:
            return None
        return self._memo("forms", lambda: assemble_constrained_forms(self.A2, self.field, self.geom))

    def modes(self, recompute=False) -> ModeSet:
        if "modes" in self._cache and not recompute:
            return self._cache["modes"]
        fp = self.fp("modes")
        d = self.store.path("modes")
        if not recompute and (d / "modes.json").exists():
            try:
                ms = ModeSet.load(d, fingerprint=fp)
                self._cache["modes"] = ms
                return ms
            except FingerprintError:
                log.info("modes are stale; recomputing")
        forms = self.forms
        if forms is None:
            raise UnsupportedError("the cell has no inclusion, so there are no constrained modes")
        N = min(self.cfg.discretization.modes, forms.ndof)
        ms = solve_modes(forms, N, method=self.cfg.fem.eig_method)
        ms = ModeSet(ms.mu, ms.s, ms.hbar, ms.coupling, fp)
        ms.save(d)
        self._cache["modes"] = ms
        return ms

    # correctors and coefficients ------------------------------------------
    def correctors(self):
        return self._memo("correctors", lambda: solve_correctors(
            self.A1, self.geom, self.field, cg_tol=self.cfg.fem.cg_tol, cg_maxiter=self.cfg.fem.cg_maxiter))

    def coeffs(self, recompute=False) -> HomogenizedCoefficients:
        if "coeffs" in self._cache and not recompute:
            return self._cache["coeffs"]
        fp = self.fp("coeffs")
        p = self.store.path("coeffs.json")
        if not recompute and p.exists():
            d = io.read_json(p)
            if d.get("fingerprint") == fp:
                co = HomogenizedCoefficients.from_dict(d["coefficients"])
                self._cache["coeffs"] = co
                return co
            log.info("coefficients are stale; recomputing")
        cs = self.correctors()
        co = homogenized_coefficients(cs, self.forms, self.geom, self.field)
        co.fingerprint = fp
        io.write_raw(self.store.path("correctors/w.raw"), cs.w, fingerprint=fp, layout="(6 Voigt pairs, ndof)")
        io.write_raw(self.store.path("correctors/theta.raw"), cs.theta, fingerprint=fp, layout="(3, ndof)")
        payload = {"fingerprint": fp, "coefficients": co.as_dict(),
                   "cg_iterations": [int(i) for i in np.atleast_1d(cs.iterations)]}
        if not self.geom.is_empty:
            ms = self.modes()
            K0 = float(ms.weights(co.xi).sum())
            payload["K1_0"] = K0
            payload["Mstar_minus_K1_0"] = co.Mstar - K0
            payload["sum_rule_defect"] = co.Mstar - K0 - co.vol_matrix - co.mstar
        io.write_json(p, payload)
        self._cache["coeffs"] = co
        return co

    # kernel -------------------------------------------------------------
    def kernel(self, recompute=False):
        if "kernel" in self._cache and not recompute:
            return self._cache["kernel"]
        disc = self.cfg.discretization
        co = self.coeffs()
        ms = self.modes()
        t = time_grid(disc.T, disc.kernel_dt)
        kb = kernel_series(ms, co.xi, t)
        kb.fingerprint = self.fp("kernel")
        cols = {"t": t, "kbar1_series": kb.kbar1, "kbar1_prime": kb.kbar1_prime}
        for i in range(3):
            for j in range(i, 3):
                cols[f"kbarbar_{i + 1}{j + 1}"] = kb.kbarbar[:, i, j]
        wave_dev = None
        if self.cfg.field.kind == "fixed_direction":
            tw, kw = kernel_wave_oracle(self.A2, self.geom, co.xi, disc.T, cfl=disc.wave_cfl)
            cols["kbar1_wave"] = np.interp(t, tw, kw)
            wave_dev = float(np.abs(cols["kbar1_wave"] - kb.kbar1).max())
            io.write_csv(self.store.path("kernel_wave.csv"), {"t": tw, "kbar1_wave": kw})
        io.write_csv(self.store.path("kernel.csv"), cols)
        self.store.write_meta("kernel.csv", kb.fingerprint, modes=ms.count, dual_route_deviation=wave_dev,
                              vol_inclusion=self.geom.vol_inclusion)
        res = resolvent_kernel(kb.kbar1, disc.kernel_dt, kb.kbar1_prime)
        io.write_csv(self.store.path("resolvent.csv"), {"t": res.t, "L": res.L})
        self.store.write_meta("resolvent.csv", kb.fingerprint, coefficient=res.coefficient)
        self._cache["kernel"] = (kb, wave_dev)
        return kb, wave_dev

    # macro --------------------------------------------------------------
    @property
    def data(self):
        def build():
            sc = self.cfg.scenario
            d = InitialData.from_config({"u0": sc.u0, "v0": sc.v0, "f": sc.f})
            d.check_boundary()
            return d
        return self._memo("data", build)

    def sample_times(self):
        disc = self.cfg.discretization
        return [disc.T * (k + 1) / disc.samples for k in range(disc.samples)]

    def macro_problem(self):
        disc = self.cfg.discretization
        co = self.coeffs()
        kb, _ = self.kernel()
        modal = ModalData.from_kernel(kb, disc.macro.modes)
        grid = MacroGrid(disc.macro.m)
        spacing = disc.T / disc.samples
        if disc.macro.dt is None:
            probe = MacroProblem(co, modal, grid, 1e-12)
            sub = int(np.ceil(spacing / (0.9 * probe.stable_dt()) - 1e-12))
            dt = spacing / sub
        else:
            dt = disc.macro.dt
        return MacroProblem(co, modal, grid, dt)

    def macro(self):
        if "macro" in self._cache:
            return self._cache["macro"]
        if self.case() != "directional":
            raise UnsupportedError("the macro equation for α applies when b has a fixed direction on the interface")
        disc = self.cfg.discretization
        prob = self.macro_problem()
        spacing = disc.T / disc.samples
        every = int(round(spacing / prob.dt))
        hist = run_macro(prob, disc.T, data=self.data, record_every=every)
        lim = reconstruct_limits(hist, self.data, prob.coeffs, prob.modes, prob.grid,
                                 ubar_xi=self.is_example, example_case=self.is_example)
        cols = {"t": hist.t, "alpha_mean": hist.alpha.mean(axis=(1, 2, 3)),
                "alpha_max": np.abs(hist.alpha).max(axis=(1, 2, 3))}
        for name in ("hard_phase", "soft_phase"):
            m = np.asarray(lim[name]).mean(axis=(1, 2, 3))
            for i in range(3):
                cols[f"{name}_u{i + 1}"] = m[:, i]
        io.write_csv(self.store.path("macro.csv"), cols)
        fp = self.fp("macro")
        self.store.write_meta("macro.csv", fp, dt=prob.dt, m=prob.grid.m, modes=prob.modes.count)
        io.write_raw(self.store.path("macro/alpha.raw"), hist.alpha, fingerprint=fp, t=hist.t.tolist())
        self._cache["macro"] = (prob, hist, lim)
        return prob, hist, lim

    # fine scale ---------------------------------------------------------
    def fine_cell(self):
        def build():
            gcfg = self.cfg.geometry.model_dump(exclude_none=True)
            gcfg["n"] = self.cfg.discretization.fine.cell_resolution
            g = build_geometry(gcfg)
            return g, sample_field(self.spec, g)
        return self._memo("fine_cell", build)

    def fine_targets(self, coeffs_f, times):
        """Cell averages of |Y1| u1 and of the soft-phase limit at each sample time."""
        g, _ = self.fine_cell()
        pts = coeffs_f.node_points()
        data = self.data
        u0 = data.u0_at(pts)
        hard, soft = [], []
        if self.case() == "frozen":
            if data.v0.is_zero and data.f.is_zero:
                for _ in times:
                    hard.append(g.vol_matrix * cell_average_of_nodal(coeffs_f, u0))
                    soft.append((1 - g.vol_matrix) * cell_average_of_nodal(coeffs_f, u0))
                return hard, soft
            kb, _ = self.kernel()
            modal = ModalData.from_kernel(kb)
            grid = MacroGrid(self.cfg.discretization.macro.m)
            t = time_grid(self.cfg.discretization.T, self.cfg.discretization.kernel_dt)
            lim = frozen_limits(data, modal, grid, t, g.vol_matrix)
            for tt in times:
                k = int(round(tt / (t[1] - t[0])))
                u2 = np.stack([grid.interpolate(lim["u2_avg"][k][..., i], pts) for i in range(3)], axis=-1)
                hard.append(g.vol_matrix * cell_average_of_nodal(coeffs_f, u0))
                soft.append(cell_average_of_nodal(coeffs_f, (1 - g.vol_matrix) * u0 + u2))
            return hard, soft
        prob, hist, lim = self.macro()
        xi = prob.coeffs.xi
        for tt in times:
            k = int(np.argmin(np.abs(hist.t - tt)))
            if abs(hist.t[k] - tt) > 1e-9:
                raise ConfigError(f"macro history has no snapshot at t={tt}")
            alpha = prob.grid.interpolate(hist.alpha[k], pts)
            u1 = u0 + alpha[:, None] * xi
            u2 = np.stack([prob.grid.interpolate(np.asarray(lim["u2_avg"][k])[..., i], pts) for i in range(3)],
                          axis=-1)
            hard.append(g.vol_matrix * cell_average_of_nodal(coeffs_f, u1))
            soft.append(cell_average_of_nodal(coeffs_f, (1 - g.vol_matrix) * u1 + u2))
        return hard, soft

    def fine_run(self, eps):
        key = ("fine", float(eps))
        if key in self._cache:
            return self._cache[key]
        fc = self.cfg.discretization.fine
        disc = self.cfg.discretization
        g, fld = self.fine_cell()
        cf = assemble_fine(g, fld, self.A1, self.A2, eps)
        spacing = disc.T / disc.samples
        dt = fc.dt if fc.dt is not None else choose_dt(cf, spacing, cfl=fc.cfl, max_rotation=fc.max_rotation)
        data = self.data
        forcing = None if data.f.is_zero else (lambda p, t: data.f_at(p, t))
        solver = FineSolver(cf, dt, forcing=forcing)
        pts = cf.node_points()
        log.info("fine run eps=%g: %d nodes, dt=%g", eps, cf.n_int, dt)
        run = run_fine(solver, data.u0_at(pts), data.v0_at(pts), disc.T, sample_times=self.sample_times())
        self._cache[key] = (cf, run)
        return cf, run

    def fine(self, eps_list=None):
        eps_list = self.cfg.discretization.fine.eps if eps_list is None else eps_list
        cols = {k: [] for k in ("eps", "t", "energy", "kinetic", "work", "hard_u1", "hard_u2", "hard_u3",
                                "soft_u1", "soft_u2", "soft_u3")}
        runs = {}
        for eps in eps_list:
            cf, run = self.fine_run(eps)
            runs[eps] = (cf, run)
            # energies live at half steps; pair E^{n-1/2} with t_n and repeat the first
            n = len(run.t)
            energy = np.concatenate([[run.energy[0]], run.energy])[:n]
            kin = np.concatenate([[run.kinetic[0]], run.kinetic])[:n]
            work = np.concatenate([[0.0], run.work])[:n]
            cols["eps"].append(np.full(n, eps))
            cols["t"].append(run.t)
            cols["energy"].append(energy)
            cols["kinetic"].append(kin)
            cols["work"].append(work)
            for i in range(3):
                cols[f"hard_u{i + 1}"].append(run.hard_mean[:, i])
                cols[f"soft_u{i + 1}"].append(run.soft_mean[:, i])
        io.write_csv(self.store.path("fine.csv"), {k: np.concatenate(v) for k, v in cols.items()})
        self.store.write_meta("fine.csv", self.fp("fine"), eps=list(eps_list))
        return runs

    # convergence --------------------------------------------------------
    def converge(self, eps_list=None):
        eps_list = sorted(self.cfg.discretization.fine.eps if eps_list is None else eps_list, reverse=True)
        if len(eps_list) < 2:
            raise ConfigError("a convergence study needs at least two values of eps")
        runs = self.fine(eps_list)
        rows = {"eps": [], "err_hard_phase": [], "err_soft_phase": [], "rel_hard_phase": [], "rel_soft_phase": []}
        for eps in eps_list:
            cf, run = runs[eps]
            hard_t, soft_t = self.fine_targets(cf, run.sample_t)
            eh = _space_time_rms([a - b for a, b in zip(run.hard_avg, hard_t)])
            es = _space_time_rms([a - b for a, b in zip(run.soft_avg, soft_t)])
            rows["eps"].append(eps)
            rows["err_hard_phase"].append(eh)
            rows["err_soft_phase"].append(es)
            rows["rel_hard_phase"].append(eh / max(_space_time_rms(hard_t), 1e-300))
            rows["rel_soft_phase"].append(es / max(_space_time_rms(soft_t), 1e-300))
        io.write_csv(self.store.path("converge.csv"), rows)
        eh = rows["err_hard_phase"]
        trend = {"case": self.case(), "ratios_hard": [eh[i] / eh[i + 1] for i in range(len(eh) - 1)],
                 "decreasing_hard": bool(all(eh[i + 1] < eh[i] for i in range(len(eh) - 1)))}
        self.store.write_meta("converge.csv", self.fp("converge"), **trend)
        return rows, trend

    # invariant suite ----------------------------------------------------
    def check(self):
        """Evaluate every invariant that applies to this configuration."""
        checks = []

        def add(name, value, passed, threshold=None, note=None):
            checks.append({"name": name, "value": value, "threshold": threshold, "pass": bool(passed),
                           **({"note": note} if note else {})})

        info = self.cell()
        add("cell_valid", 0.0, True)
        add("field_compatibility", float(np.linalg.norm(info["matrix_integral_b"])), True, note="checked at sampling")
        co = self.coeffs()
        add("A1star_symmetric", float(np.abs(co.A1star - co.A1star.T).max()), True)
        add("A1star_positive", float(np.linalg.eigvalsh(co.A1star).min()),
            np.linalg.eigvalsh(co.A1star).min() > 0)
        add("mstar_two_formulas", abs(co.mstar - co.mstar_quadratic),
            abs(co.mstar - co.mstar_quadratic) <= 1e-8 * max(abs(co.mstar), 1e-12) + 1e-14, 1e-8)
        rng = np.random.default_rng(self.seed)
        cs = self.correctors()
        probes = rng.standard_normal((cs.space.ndof, 4))
        res = float(corrector_residuals(cs, probes).max())
        add("corrector_residual", res, res <= 1e-8, 1e-8)
        if self.is_example:
            xi = co.xi
            add("example_Mstar_minus_1", abs(co.Mstar - 1.0), abs(co.Mstar - 1.0) <= 1e-8, 1e-8)
            add("example_cstar", abs(co.cstar), co.cstar == 0.0, 0.0)
            add("example_lambdastar", float(np.abs(co.lambdastar).max()),
                np.abs(co.lambdastar).max() <= 1e-8, 1e-8)
            add("example_mustar_minus_xi", float(np.abs(co.mustar - xi).max()),
                np.abs(co.mustar - xi).max() <= 1e-8, 1e-8)
        if not self.geom.is_empty:
            ms = self.modes()
            r, ortho = mode_residuals(ms, self.forms)
            add("mode_residual", float(r.max()), r.max() <= 1e-8, 1e-8)
            add("mode_orthonormality", ortho, ortho <= 1e-10, 1e-10)
            add("modes_sorted_positive", float(ms.mu.min()), bool(np.all(np.diff(ms.mu) >= 0) and ms.mu.min() > 0))
            partial = np.array([sum_rule_defect(ms, self.forms, N) for N in range(1, ms.count + 1)])
            add("sum_rule_nonnegative", float(partial.min()), partial.min() >= -1e-12)
            add("sum_rule_nonincreasing", float(np.diff(partial).max()), np.all(np.diff(partial) <= 1e-15))
            K0 = float(ms.weights(co.xi).sum())
            ident = co.Mstar - K0 - co.vol_matrix - co.mstar
            add("remark_identity_vs_sum_rule", abs(ident - partial[-1]),
                abs(ident - partial[-1]) <= 1e-10, 1e-10,
                note=f"defect {ident:.6g} = {ident / self.geom.vol_inclusion:.4g} |Y2|")
            kb, dev = self.kernel()
            if dev is not None:
                add("kernel_dual_route_deviation", dev / self.geom.vol_inclusion, True,
                    note="relative to |Y2|; informational")
            g = np.sin(3 * kb.t) * kb.t
            a = volterra_resolve(kb.kbar1, g, kb.dt, kb.kbar1_prime)
            back = volterra_forward(kb.kbar1, a, kb.dt, kb.kbar1_prime)
            rt = float(np.abs(back - g).max() / np.abs(g).max())
            add("volterra_roundtrip", rt, rt <= 1e-12, 1e-12)
        # fine-scale conservation on a short run at the coarsest eps
        g_f, fld_f = self.fine_cell()
        eps = max(self.cfg.discretization.fine.eps)
        cf = assemble_fine(g_f, fld_f, self.A1, self.A2, eps)
        fc = self.cfg.discretization.fine
        dt = choose_dt(cf, self.cfg.discretization.T / self.cfg.discretization.samples, cfl=fc.cfl,
                       max_rotation=fc.max_rotation)
        solver = FineSolver(cf, dt)
        pts = cf.node_points()
        st = solver.initial_state(self.data.u0_at(pts) + 1e-3 * np.sin(np.pi * pts), self.data.v0_at(pts))
        E = []
        for _ in range(200):
            st = solver.step(st)
            E.append(st.energy)
        drift_rel = float((max(E) - min(E)) / abs(E[0]))
        add("fine_energy_drift_200_steps", drift_rel, drift_rel <= 2e-7, 2e-7)
        v = rng.standard_normal((10000, 3))
        ax = rng.standard_normal((10000, 3))
        ax /= np.linalg.norm(ax, axis=1, keepdims=True)
        th = rng.uniform(-20, 20, 10000)
        n0 = np.linalg.norm(v, axis=1)
        w = kernels.rotate_nodes(v.copy(), ax, np.cos(th), np.sin(th))
        ulps = float((np.abs(np.linalg.norm(w, axis=1) - n0) / np.spacing(n0)).max())
        add("rotation_norm_ulps", ulps, ulps <= 4, 4)
        if self.case() == "directional" and not self.geom.is_empty:
            prob = self.macro_problem()
            st0 = prob.initial_state()
            for _ in range(5):
                st0 = prob.step(st0, np.zeros(prob.grid.shape))
            add("macro_null_dynamics", float(np.abs(st0.alpha).max()), np.abs(st0.alpha).max() == 0.0, 0.0)
        report = {"fingerprint": self.fp("coeffs"), "checks": checks,
                  "passed": all(c["pass"] for c in checks)}
        io.write_json(self.store.path("check.json"), report)
        return report


def _space_time_rms(fields):
    """Root mean square over sample times, cells and components' Euclidean norm."""
    a = np.asarray(fields)
    return float(np.sqrt(np.mean(np.sum(a**2, axis=-1))))


# --------------------------------------------------------------------------
# report


def emit_report(store: ArtifactStore) -> dict:
    """Collect whatever artifacts are present into report.json."""
    present = [name for name in ARTIFACTS if store.exists(name)]
    if not present:
        raise MissingArtifactError(ARTIFACTS)
    rep = {"artifacts": present, "missing": [a for a in ARTIFACTS if a not in present]}
    if store.exists("cell.json"):
        cell = io.read_json(store.path("cell.json"))
        rep["cell"] = {k: cell[k] for k in ("n", "vol_matrix", "vol_inclusion", "xi", "interface_rank", "case")}
    vol2 = rep.get("cell", {}).get("vol_inclusion")
    vol1 = rep.get("cell", {}).get("vol_matrix")
    if store.exists("coeffs.json"):
        d = io.read_json(store.path("coeffs.json"))
        co = d["coefficients"]
        rep["coefficients"] = co
        xi = np.array(co["xi"])
        rep["example_identities"] = {
            "abs_Mstar_minus_1": abs(co["Mstar"] - 1.0),
            "abs_cstar": abs(co["cstar"]),
            "abs_lambdastar": float(np.abs(co["lambdastar"]).max()),
            "abs_mustar_minus_xi": float(np.abs(np.array(co["mustar"]) - xi).max()),
        }
        if "Mstar_minus_K1_0" in d:
            rep["Mstar_minus_K1_0"] = d["Mstar_minus_K1_0"]
            rep["remark_identity_defect"] = abs(d["sum_rule_defect"])
            rep["sum_rule_defect"] = d["sum_rule_defect"]
            if vol2:
                rep["sum_rule_defect_over_Y2"] = d["sum_rule_defect"] / vol2
            if vol1 is not None:
                rep["Mstar_minus_K1_0_minus_Y1"] = d["Mstar_minus_K1_0"] - vol1
    if store.exists("kernel.csv"):
        meta = io.read_json(store._meta_path("kernel.csv"))
        rep["kernel"] = {"modes": meta.get("modes"), "dual_route_deviation": meta.get("dual_route_deviation")}
        if meta.get("dual_route_deviation") is not None and meta.get("vol_inclusion"):
            rep["kernel"]["dual_route_deviation_over_Y2"] = meta["dual_route_deviation"] / meta["vol_inclusion"]
    if store.exists("converge.csv"):
        tab = io.read_csv(store.path("converge.csv"))
        meta = io.read_json(store._meta_path("converge.csv"))
        rep["convergence"] = {k: v.tolist() for k, v in tab.items()}
        rep["convergence_trend"] = meta
        if meta.get("case") == "frozen":
            rep["frozen_hard_phase"] = True
            rep["frozen_trend"] = meta.get("ratios_hard")
    if store.exists("check.json"):
        chk = io.read_json(store.path("check.json"))
        rep["checks"] = chk["checks"]
        rep["checks_passed"] = chk["passed"]
    io.write_json(store.path("report.json"), rep)
    return rep
