"""Scenario runner: ``nlphase <subcommand> --config run.yaml --out results/``.

A run reads one YAML file, writes CSV tables and a JSON summary, and records
everything in ``manifest.json``. The exit status is 0 only when every check
listed under ``checks`` passes.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from dataclasses import field as dc_field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import yaml

from . import __version__
from . import field as fld
from . import kernel as kern
from . import oracle as orc
from . import potential as pot
from . import profile1d as prof


class ConfigError(ValueError):
    pass


class RunFailure(RuntimeError):
    """A solver or module error, qualified by the module that raised it."""


CACHE_ENV = "NLPHASE_CACHE_DIR"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class KernelConfig:
    family: str = "gaussian"
    dim: int = 1
    sigma: float = 1.0
    rate: float = 1.0
    eta: float = 0.5
    lam: float = 1.0
    rho: float = 1.0
    tail_rate: float = 1.0
    cap: Optional[float] = None

    def build(self) -> kern.KernelSpec:
        if self.family == "gaussian":
            spec = kern.gaussian(self.dim, self.sigma)
        elif self.family == "exponential":
            spec = kern.exponential(self.dim, self.rate)
        elif self.family == "fractional":
            spec = kern.fractional(self.dim, self.eta, self.lam, self.rho, self.tail_rate)
        else:
            raise ConfigError(f"kernel: unknown family {self.family!r}")
        return kern.truncate(spec, self.cap) if self.cap is not None else spec


@dataclass
class WellsConfig:
    kind: str = "constant"
    a: float = -1.0
    b: float = 1.0
    slope1: list = dc_field(default_factory=lambda: [0.0])
    slope2: Optional[list] = None
    c: float = 0.0
    c2: Optional[float] = None
    x0: list = dc_field(default_factory=lambda: [0.0])
    alpha: float = 1.0

    def build(self, dim: int) -> pot.WellPair:
        if self.kind == "constant":
            return pot.constant_wells(self.a, self.b, dim)
        if self.kind == "affine":
            return pot.affine_wells(self.a, self.b, self.slope1, self.slope2, dim)
        if self.kind == "holder":
            return pot.holder_wells(self.a, self.b, self.c, self.x0, self.alpha, self.c2)
        raise ConfigError(f"potential.wells: unknown kind {self.kind!r}")


@dataclass
class FixtureConfig:
    """A profile with compact transition ``sin(pi t / 2w)`` on ``[-w, w]`` or ``tanh(t / w)``."""

    shape: str = "compact_sin"
    width: float = 3.0
    R: float = 6.0
    dt: float = 0.0625
    mode: str = "linear"

    def profile(self, a: float, b: float) -> prof.MonotoneProfile:
        w = self.width
        if self.shape == "compact_sin":
            f = lambda t: np.sin(0.5 * np.pi * np.clip(t, -w, w) / w)
        elif self.shape == "tanh":
            f = lambda t: np.tanh(t / w)
        else:
            raise ConfigError(f"potential.fixture: unknown shape {self.shape!r}")
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return prof.make_grid_profile(lambda t: mid + half * f(t), self.R, self.dt, a, b)


@dataclass
class PotentialConfig:
    kind: str = "quartic"
    c: Any = 0.25
    wells: WellsConfig = dc_field(default_factory=WellsConfig)
    fixture: Optional[FixtureConfig] = None


@dataclass
class SolverConfig:
    method: str = "descent"
    R: float = 8.0
    dt: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 20000
    certify: bool = True
    certificate_tol: float = 1e-6

    def options(self) -> prof.SolverOptions:
        return prof.SolverOptions(R=self.R, dt=self.dt, tol=self.tol, max_iter=self.max_iter)

    def picard(self) -> prof.PicardOptions:
        return prof.PicardOptions(R=self.R, dt=self.dt)


@dataclass
class FaceConfig:
    p0: list
    p1: list
    normal: list


@dataclass
class FieldConfig:
    lo: list = dc_field(default_factory=lambda: [0.0, 0.0])
    hi: list = dc_field(default_factory=lambda: [1.0, 1.0])
    n: int = 96
    faces: list = dc_field(default_factory=list)
    eps: list = dc_field(default_factory=lambda: [0.2, 0.1, 0.05])
    omega: Any = "sqrt"
    nodes: int = 5
    delta: float = 0.1

    def phase(self) -> fld.PolyhedralPhase:
        faces = self.faces or [FaceConfig([self.lo[0], 0.5 * (self.lo[1] + self.hi[1])],
                                          [self.hi[0], 0.5 * (self.lo[1] + self.hi[1])], [0.0, 1.0])]
        return fld.PolyhedralPhase(tuple(fld.Face(tuple(f.p0), tuple(f.p1), tuple(f.normal)) for f in faces),
                                   tuple(self.lo), tuple(self.hi))

    def omega_schedule(self) -> Callable[[float], float]:
        if self.omega == "sqrt":
            return fld.default_omega
        if self.omega == "linear":
            return lambda e: e
        return lambda e, w=float(self.omega): w


@dataclass
class CheckConfig:
    metric: str
    op: str = "<="
    value: float = 0.0


@dataclass
class RunConfig:
    kernel: Optional[KernelConfig] = None
    potential: Optional[PotentialConfig] = None
    solver: SolverConfig = dc_field(default_factory=SolverConfig)
    field: Optional[FieldConfig] = None
    points: Optional[list] = None
    directions: Optional[list] = None
    sets: Optional[dict] = None
    contdep: Optional[dict] = None
    oracle: Optional[dict] = None
    checks: list = dc_field(default_factory=list)
    seed: int = 0


_REQUIRED = {
    "profile": ("kernel", "potential"),
    "tension": ("kernel", "potential", "points", "directions"),
    "holder-scan": ("kernel", "potential", "points", "directions"),
    "contdep-sweep": ("kernel", "potential", "contdep"),
    "gamma-sweep": ("kernel", "potential", "field"),
    "defect": ("kernel", "field", "sets"),
    "trace-gap": ("kernel", "potential", "field"),
    "extract-phase": ("kernel", "potential", "field"),
    "oracle": ("kernel", "potential", "oracle"),
}


def _build(cls, data, section: str):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    names = set(cls.__dataclass_fields__)
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"section '{section}': unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def parse_config(text: str, subcommand: str) -> tuple[RunConfig, dict]:
    """Parse YAML text into a :class:`RunConfig`; errors carry line and column."""
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"parse error{where}: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("parse error at line 1, column 1: the config must be a mapping")
    for section in _REQUIRED.get(subcommand, ()):
        if raw.get(section) is None:
            raise ConfigError(f"missing section '{section}' required by '{subcommand}'")
    cfg = RunConfig(
        kernel=_build(KernelConfig, raw.get("kernel"), "kernel"),
        solver=_build(SolverConfig, raw.get("solver", {}), "solver"),
        points=raw.get("points"),
        directions=raw.get("directions"),
        sets=raw.get("sets"),
        contdep=raw.get("contdep"),
        oracle=raw.get("oracle"),
        seed=int(raw.get("seed", 0)),
    )
    if raw.get("potential") is not None:
        p = dict(raw["potential"])
        wells = _build(WellsConfig, p.pop("wells", {}) or {}, "potential.wells")
        fixture = _build(FixtureConfig, p.pop("fixture", None), "potential.fixture")
        cfg.potential = _build(PotentialConfig, {**p, "wells": wells, "fixture": fixture}, "potential")
    if raw.get("field") is not None:
        f = dict(raw["field"])
        faces = [_build(FaceConfig, x, "field.faces") for x in f.pop("faces", []) or []]
        cfg.field = _build(FieldConfig, {**f, "faces": faces}, "field")
        if not cfg.field.eps:
            raise ConfigError("validation error: field.eps must list at least one value")
    cfg.checks = [_build(CheckConfig, c, "checks") for c in raw.get("checks", []) or []]
    return cfg, raw


def apply_overrides(text: str, overrides: Optional[str]) -> str:
    """Apply ``a.b=value,c.0.d=value`` overrides to the YAML document."""
    if not overrides:
        return text
    raw = yaml.safe_load(text) or {}
    for item in overrides.split(","):
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        path, value = item.split("=", 1)
        node = raw
        keys = path.strip().split(".")
        for k in keys[:-1]:
            node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
        last = keys[-1]
        if isinstance(node, list):
            node[int(last)] = yaml.safe_load(value)
        else:
            node[last] = yaml.safe_load(value)
    return yaml.safe_dump(raw, sort_keys=True)


def config_hash(text: str) -> str:
    canon = json.dumps(yaml.safe_load(text) or {}, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Outputs
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    subcommand: str
    module_versions: dict
    wall_time: float
    outputs: list
    tolerances: dict
    results: dict
    checks: list
    passed: bool
    flags: list = dc_field(default_factory=list)


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, chash: str, columns: list[tuple[str, str]], rows: list[list]) -> None:
    """CSV with a config-hash comment, a units comment and a header row."""
    buf = io.StringIO()
    buf.write(f"# config_hash={chash}\n")
    buf.write("# units: " + ",".join(f"{name}[{unit}]" for name, unit in columns) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in columns])
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    _atomic_write(path, buf.getvalue())


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: Path, chash: str, payload: dict) -> None:
    body = {"config_hash": chash, **_jsonable(payload)}
    _atomic_write(path, json.dumps(body, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Builders shared by the subcommands
# ---------------------------------------------------------------------------


def _potential_1d(cfg: RunConfig, k1) -> tuple[pot.Potential1D, Optional[prof.MonotoneProfile]]:
    p = cfg.potential
    wells = p.wells.build(1)
    a, b = wells.at(0.0)
    if p.kind == "quartic":
        return pot.make_quartic_moving(wells, p.c).at(0.0), None
    if p.kind == "manufactured":
        fx = p.fixture or FixtureConfig()
        g0 = fx.profile(a, b)
        return pot.manufacture_potential(g0, k1, mode=fx.mode), g0
    raise ConfigError(f"potential: unknown kind {p.kind!r}")


def _potential_field(cfg: RunConfig, dim: int) -> pot.PotentialSpec:
    p = cfg.potential
    if p.kind != "quartic":
        raise ConfigError("field runs need a quartic potential with moving wells")
    return pot.make_quartic_moving(p.wells.build(dim), p.c)


def _module_call(module: str, func: Callable, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except (ConfigError, RunFailure):
        raise
    except Exception as exc:
        raise RunFailure(f"{module}: {type(exc).__name__}: {exc}") from exc


def _map(workers: int, func: Callable, items: list) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _profile_columns():
    return [("t", "length"), ("value", "field")]


def cmd_profile(cfg: RunConfig, out: Path, chash: str, action: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    k1 = kern.line_kernel(spec) if spec.dim == 1 else prof._directional(spec, np.eye(spec.dim)[0])
    W, g0 = _module_call("potential", _potential_1d, cfg, k1)
    results: dict = {}
    files = []
    if g0 is not None:
        cert0 = _module_call("profile1d", prof.certify_optimality, g0, k1, W, tol=cfg.solver.certificate_tol,
                             mode=cfg.potential.fixture.mode if cfg.potential.fixture else "linear")
        results["fixture_certificate_gap"] = max(cert0.sup_gap, cert0.support_gap)
        results["fixture_certificate"] = cert0.verdict
    if action == "certify":
        if g0 is None:
            raise ConfigError("profile certify needs a manufactured fixture under potential.fixture")
        write_csv(out / "profile.csv", chash, _profile_columns(), [[t, v] for t, v in zip(g0.grid, g0.values)])
        files.append("profile.csv")
        results["certificate_gap"] = results["fixture_certificate_gap"]
        return results, files
    methods = ["descent", "picard"] if cfg.solver.method == "both" else [cfg.solver.method]
    R = cfg.solver.R
    dt = cfg.solver.dt
    if g0 is not None:
        R, dt = cfg.potential.fixture.R, cfg.potential.fixture.dt
    for m in methods:
        if m == "descent":
            opts = cfg.solver.options()
            opts.R, opts.dt = R, dt
            sol = _module_call("profile1d", prof.solve_profile_descent, k1, W, opts=opts)
        elif m == "picard":
            popts = cfg.solver.picard()
            popts.R, popts.dt = R, dt
            sol = _module_call("profile1d", prof.solve_profile_picard, k1, W, opts=popts)
        else:
            raise ConfigError(f"solver: unknown method {m!r}")
        g = sol.profile
        name = f"profile_{m}.csv"
        write_csv(out / name, chash, _profile_columns(), [[t, v] for t, v in zip(g.grid, g.values)])
        files.append(name)
        results[f"{m}_energy"] = sol.energy
        results[f"{m}_iterations"] = sol.iterations
        results[f"{m}_flag"] = sol.flag
        results[f"{m}_residual"] = sol.residual
        if g0 is not None:
            c1, _ = prof.center_profile(g)
            c0, _ = prof.center_profile(g0)
            w = prof.weight_sigma(k1, 2.0)
            results[f"{m}_distance"] = prof.profile_distance(c1, c0, w)
            results[f"{m}_distance_unweighted"] = prof.profile_distance(c1, c0)
    return results, files


def cmd_tension(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    P = _potential_field(cfg, spec.dim)
    opts = cfg.solver.options()
    jobs = [(tuple(map(float, x)), tuple(map(float, xi))) for x in cfg.points for xi in cfg.directions]
    cache_dir = os.environ.get(CACHE_ENV)
    cache: dict = {}
    cache_file = None
    if cache_dir:
        cache_file = Path(cache_dir) / f"tension-{chash}.json"
        if cache_file.exists():
            cache = json.loads(cache_file.read_text())

    def one(job):
        key = json.dumps(job)
        if key in cache:
            return cache[key]
        x, xi = job
        xi_n = np.asarray(xi) / np.linalg.norm(xi)
        return _module_call("profile1d", prof.surface_tension, np.asarray(x), xi_n, spec, P, opts)

    vals = _map(workers, one, jobs)
    if cache_file is not None:
        cache.update({json.dumps(j): v for j, v in zip(jobs, vals)})
        _atomic_write(cache_file, json.dumps(cache, sort_keys=True))
    rows = [[*x, *xi, v] for (x, xi), v in zip(jobs, vals)]
    m = len(jobs[0][0])
    cols = [(f"x{i}", "length") for i in range(m)] + [(f"xi{i}", "1") for i in range(m)] + [("sigma", "energy/area")]
    write_csv(out / "tension.csv", chash, cols, rows)
    return {"min_sigma": min(vals), "max_sigma": max(vals), "count": len(vals)}, ["tension.csv"]


def cmd_holder_scan(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    P = _potential_field(cfg, spec.dim)
    xi = np.asarray(cfg.directions[0], dtype=float)
    xi = xi / np.linalg.norm(xi)
    res = _module_call("profile1d", prof.holder_scan, P, spec, xi, np.asarray(cfg.points, dtype=float),
                       cfg.solver.options())
    rows = [[s, d, l2] for s, d, l2 in zip(res.separations, res.distances, res.l2_distances)]
    write_csv(out / "holder_pairs.csv", chash,
              [("separation", "length"), ("weighted_l1", "field*length"), ("l2_squared", "field^2*length")], rows)
    alpha = cfg.potential.wells.alpha
    return {"exponent": res.exponent, "constant": res.constant, "degenerate": res.degenerate,
            "target_exponent": alpha * alpha}, ["holder_pairs.csv"]


def cmd_contdep(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    k1 = kern.line_kernel(spec)
    base, _ = _potential_1d(cfg, k1)
    rhos = [float(r) for r in cfg.contdep.get("rhos", [])]
    if not rhos:
        raise ConfigError("validation error: contdep.rhos must list at least one value")
    a, b = base.a, base.b
    family = prof.transition_family(base, lambda r: (a - r, b + r))
    res = _module_call("profile1d", prof.continuous_dependence_sweep, family, k1, rhos, cfg.solver.options())
    rows = [[r["rho"], r["energy"], r["gap"], r["relative_gap"]] for r in res["rows"]]
    write_csv(out / "contdep.csv", chash, [("rho", "field"), ("energy", "energy"), ("gap", "energy"),
                                           ("relative_gap", "1")], rows)
    return {"base_energy": res["base_energy"], "final_relative_gap": res["final_relative_gap"]}, ["contdep.csv"]


def cmd_gamma_sweep(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    f = cfg.field
    P = _potential_field(cfg, spec.dim)
    phase = f.phase()
    rows = _module_call("field", fld.gamma_sweep, phase, spec, P, f.eps, f.omega_schedule(), f.n, f.nodes,
                        cfg.solver.options())
    cols = [("eps", "length"), ("omega", "1"), ("energy", "energy"), ("limit", "energy"), ("gap", "energy"),
            ("relative_gap", "1"), ("nonlocal", "energy"), ("potential", "energy")]
    write_csv(out / "gamma_sweep.csv", chash, cols, [list(asdict(r).values()) for r in rows])
    gaps = [r.relative_gap for r in rows]
    order = np.argsort([-r.eps for r in rows])
    ordered = [gaps[i] for i in order]
    return {"limit": rows[0].limit, "final_relative_gap": ordered[-1],
            "gap_decreasing": all(x > y for x, y in zip(ordered[:-1], ordered[1:])),
            "omega_schedule": str(f.omega)}, ["gamma_sweep.csv"]


def _mask(u: fld.PhaseField, box: dict) -> np.ndarray:
    return fld.rectangle_mask(u, box["lo"], box["hi"])


def cmd_defect(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    f = cfg.field
    phase = f.phase()
    wells = (cfg.potential.wells.build(spec.dim) if cfg.potential else pot.constant_wells(-1.0, 1.0, spec.dim))
    u = phase.field(wells, f.n)
    A, B = _mask(u, cfg.sets["A"]), _mask(u, cfg.sets["B"])
    vals = _map(workers, lambda e: _module_call("field", fld.locality_defect, u, A, B, spec, float(e)), list(f.eps))
    sup = float(np.max(np.abs(u.values[A | B])))
    length = phase.total_length()
    bound = fld.divided_defect_bound(spec, sup, length)
    write_csv(out / "defect.csv", chash, [("eps", "length"), ("defect", "energy"), ("bound", "energy")],
              [[e, v, bound] for e, v in zip(f.eps, vals)])
    return {"final_defect": vals[-1], "bound": bound, "ratio_to_bound": vals[-1] / bound}, ["defect.csv"]


def cmd_trace_gap(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    f = cfg.field
    P = _potential_field(cfg, spec.dim)
    phase = f.phase()
    face = phase.faces[0]
    fam = _module_call("field", fld.solve_profile_family, face, spec, P, f.nodes, cfg.solver.options())
    sched = f.omega_schedule()
    hat = kern.hat_kernel(spec)
    rows = []
    for e in f.eps:
        u = fld.build_recovery(fld.PolyhedralPhase((face,), phase.lo, phase.hi), fam, P.wells, e, sched(e), f.n)
        below = fld.rectangle_mask(u, phase.lo, phase.hi) & (face.signed_distance(u.centers()) < 0)
        gap = fld.eps_trace_gap(u, face, lambda y: P.wells.values(y)[0], spec, e, side=below, hat=hat)
        rows.append([e, gap])
    write_csv(out / "trace_gap.csv", chash, [("eps", "length"), ("trace_gap", "field*length")], rows)
    return {"final_trace_gap": rows[-1][1]}, ["trace_gap.csv"]


def cmd_extract(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    f = cfg.field
    P = _potential_field(cfg, spec.dim)
    phase = f.phase()
    face = phase.faces[0]
    fam = _module_call("field", fld.solve_profile_family, face, spec, P, f.nodes, cfg.solver.options())
    sched = f.omega_schedule()
    rows = []
    for e in f.eps:
        u = fld.build_recovery(fld.PolyhedralPhase((face,), phase.lo, phase.hi), fam, P.wells, e, sched(e), f.n)
        ex = fld.extract_phase(u, P, f.delta)
        rows.append([e, ex.l1gap])
    write_csv(out / "extract_phase.csv", chash, [("eps", "length"), ("l1gap", "field*area")], rows)
    return {"final_l1gap": rows[-1][1]}, ["extract_phase.csv"]


def cmd_oracle(cfg: RunConfig, out: Path, chash: str, workers: int) -> tuple[dict, list]:
    spec = cfg.kernel.build()
    o = cfg.oracle
    kind = o.get("kind", "brute")
    if kind == "brute":
        k1 = kern.line_kernel(spec)
        W, _ = _potential_1d(cfg, k1)
        inst = orc.TinyInstance(k1, W, R=float(o.get("R", 2.0)), n_nodes=int(o.get("n_nodes", 12)),
                                n_levels=int(o.get("n_levels", 9)))
        res = _module_call("oracle", orc.brute_profile, inst, int(o.get("budget", orc.DEFAULT_BUDGET)))
        g = res.profile
        write_csv(out / "brute_profile.csv", chash, _profile_columns(), [[t, v] for t, v in zip(g.grid, g.values)])
        return {"brute_energy": res.energy, "searched": res.searched}, ["brute_profile.csv"]
    if kind == "quadrature":
        rows = []
        for item in o.get("expressions", []):
            name = item["expr"]
            params = {k: v for k, v in item.items() if k != "expr"}
            params["kernel"] = spec
            r = _module_call("oracle", orc.reference_quadrature, name, params)
            rows.append([name, json.dumps({k: v for k, v in item.items() if k != "expr"}, sort_keys=True),
                         r.value, r.error, r.ladders_agree])
        write_csv(out / "quadrature.csv", chash, [("expr", "-"), ("params", "-"), ("value", "1"), ("error", "1"),
                                                  ("ladders_agree", "bool")], rows)
        return {"count": len(rows), "all_agree": all(r[-1] for r in rows)}, ["quadrature.csv"]
    raise ConfigError(f"oracle: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


_OPS = {"<=": lambda a, b: a <= b, "<": lambda a, b: a < b, ">=": lambda a, b: a >= b,
        ">": lambda a, b: a > b, "==": lambda a, b: a == b}


def evaluate_checks(checks: list[CheckConfig], results: dict) -> list[dict]:
    out = []
    for c in checks:
        if c.metric not in results:
            out.append({"metric": c.metric, "op": c.op, "value": c.value, "observed": None, "passed": False})
            continue
        obs = results[c.metric]
        if isinstance(obs, str):
            ok = obs == c.value
        else:
            ok = bool(_OPS[c.op](float(obs), float(c.value)))
        out.append({"metric": c.metric, "op": c.op, "value": c.value, "observed": obs, "passed": ok})
    return out


def run(subcommand: str, config_path: str, out_dir: str, workers: int = 1, overrides: Optional[str] = None,
        action: str = "solve") -> RunManifest:
    """Run one subcommand end to end and write its manifest."""
    t0 = time.perf_counter()
    text = apply_overrides(Path(config_path).read_text(), overrides)
    cfg, _ = parse_config(text, subcommand)
    chash = config_hash(text)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed)
    if subcommand == "profile":
        results, files = cmd_profile(cfg, out, chash, action, workers)
    else:
        handler = {"tension": cmd_tension, "holder-scan": cmd_holder_scan, "contdep-sweep": cmd_contdep,
                   "gamma-sweep": cmd_gamma_sweep, "defect": cmd_defect, "trace-gap": cmd_trace_gap,
                   "extract-phase": cmd_extract, "oracle": cmd_oracle}.get(subcommand)
        if handler is None:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        results, files = handler(cfg, out, chash, workers)
    checks = evaluate_checks(cfg.checks, results)
    flags = []
    if subcommand in ("gamma-sweep", "trace-gap", "extract-phase") and cfg.field is not None:
        flags.append(f"omega schedule {cfg.field.omega!r} couples the stretch to eps")
    write_json(out / "summary.json", chash, {"subcommand": subcommand, "results": results})
    files.append("summary.json")
    import scipy
    manifest = RunManifest(
        config_hash=chash, subcommand=subcommand if subcommand != "profile" else f"profile {action}",
        module_versions={"nlphase": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
        wall_time=time.perf_counter() - t0, outputs=sorted(files),
        tolerances={"solver_tol": cfg.solver.tol, "certificate_tol": cfg.solver.certificate_tol},
        results=results, checks=checks, passed=all(c["passed"] for c in checks), flags=flags)
    write_json(out / "manifest.json", chash, asdict(manifest))
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlphase", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML scenario file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker threads for sweep entries")
        p.add_argument("--tol-overrides", default=None, help="comma-separated key.path=value overrides")

    p = sub.add_parser("profile", help="solve or certify a one-dimensional optimal profile")
    p.add_argument("action", choices=["solve", "certify"])
    common(p)
    for name in ("tension", "holder-scan", "contdep-sweep", "gamma-sweep", "defect", "trace-gap",
                 "extract-phase", "oracle"):
        common(sub.add_parser(name))
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        m = run(args.command, args.config, args.out, args.workers, args.tol_overrides,
                getattr(args, "action", "solve"))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    for c in m.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['metric']} {c['op']} {c['value']} (observed {c['observed']})")
    print(f"wrote {len(m.outputs)} files to {args.out} in {m.wall_time:.1f}s")
    return 0 if m.passed else 1


if __name__ == "__main__":
    sys.exit(main())
