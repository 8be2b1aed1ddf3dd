"""Scenario runner: `cad axioms|reduce|dualize|branes|noether --config FILE --out DIR [--levels 1,2,4]`.

Every run writes report.json (deterministic for a fixed config) and timings.json (wall times),
plus kind-specific CSV/JSON dumps. Artifacts are staged in a scratch directory and moved into
place only when the run finishes, so a failed run leaves nothing behind.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scenarios as S
from .courant import ClosedThreeForm, GeneralizedSection, axiom_residuals, dirac_leaf_check
from .duality import (DualityScenario, brane_boundary_residual, brane_transport, dirac_bc, dualize,
                      extract_AG, flatness_residual, roundtrip, seed_equivariance)
from .equivariant import (DoubleModel, calibrate_kappa, check_equivariance, chern_simons_residuals,
                          distribution_curvature_residual, maurer_cartan, projected_connection,
                          pullback_residuals, reduce, transport_RD)
from .poly import Form, Poly
from .presets import algebra_from_json, double_model
from .sigma import (Background, ConstantMetric, LightConeLattice, VectorTarget, dalembert,
                    flow_preserves, max_residual, noether_current, solve_sr)

KINDS = ("axioms", "reduce", "dualize", "branes", "noether")
ROUNDOFF_FLOOR = 1e-9


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration (exit code 2)."""


class ScenarioError(RuntimeError):
    """A scenario failed while running; carries the module that raised."""


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    preset: str | None = None
    files: dict = field(default_factory=dict)       # role -> path (resolved against the config file)
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    convergence_levels: tuple = (1, 2, 4)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        levels = tuple(int(x) for x in self.convergence_levels)
        if any(x < 1 for x in levels):
            raise ConfigError("convergence levels are positive h-divisors")
        object.__setattr__(self, "convergence_levels", levels)
        for role, p in self.files.items():
            if not Path(p).is_file():
                raise FileNotFoundError(f"{role} file not found: {p}")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "ScenarioConfig":
        unknown = set(data) - {"kind", "preset", "files", "params", "tolerances", "seed", "levels"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("config lacks 'kind'")
        files = {k: str((base / v).resolve()) for k, v in data.get("files", {}).items()}
        return cls(data["kind"], data.get("preset"), files, dict(data.get("params", {})),
                   dict(data.get("tolerances", {})), int(data.get("seed", 0)),
                   tuple(data.get("levels", (1, 2, 4))))

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    def tol(self, name, default):
        return float(self.tolerances.get(name, default))

    def load(self, role):
        return json.loads(Path(self.files[role]).read_text())


# ---------------------------------------------------------------------------
# reports

@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    criterion: str
    order: object = None   # float, "saturated", or None
    wall_time: float = 0.0

    def to_json(self):
        d = {"name": self.name, "value": self.value, "tol": self.tol, "pass": self.passed, "criterion": self.criterion}
        if self.order is not None:
            d["order"] = self.order
        return d


@dataclass
class Report:
    kind: str
    name: str
    checks: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check):
        self.checks.append(check)
        return check

    def bound(self, name, value, tol, t0=None):
        value = float(value)
        return self.add(Check(name, value, tol, bool(value <= tol), f"<= {tol:g}",
                              wall_time=0.0 if t0 is None else time.perf_counter() - t0))

    def to_json(self) -> dict:
        return {"kind": self.kind, "name": self.name, "pass": self.passed,
                "checks": [c.to_json() for c in self.checks], "data": _jsonable(self.data)}

    def timings(self) -> dict:
        return {c.name: c.wall_time for c in self.checks}

    def lines(self):
        for c in self.checks:
            o = "" if c.order is None else (f"  order={c.order}" if isinstance(c.order, str) else f"  order={c.order:.3f}")
            yield f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.3e} ({c.criterion}){o}"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# convergence studies

def fit_order(hs, values, floor=ROUNDOFF_FLOOR):
    """Least-squares slope of log(value) against log(h); "saturated" when every value is at roundoff."""
    hs, values = np.asarray(hs, float), np.asarray(values, float)
    if hs.size < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    if np.all(values <= floor):
        return "saturated"
    if np.any(values <= 0):
        return "saturated" if np.all(values[values > 0] <= floor) else float("nan")
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])


def threads() -> int:
    raw = os.environ.get("CAD_THREADS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"CAD_THREADS must be an integer, got {raw!r}") from None


def _map_levels(fn, config, levels):
    n = min(threads(), len(levels))
    if n <= 1:
        return [fn(config, lv) for lv in levels]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, [config] * len(levels), levels))


def convergence_study(config: ScenarioConfig, levels=None, measure=None) -> dict:
    """Order table {check: {"h": [...], "values": [...], "order": slope | "saturated"}}."""
    levels = tuple(levels if levels is not None else config.convergence_levels)
    if len(levels) < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    measure = measure if measure is not None else _MEASURES[config.kind]
    rows = _map_levels(measure, config, levels)
    table = {}
    for name in rows[0]["values"]:
        hs = [r["h"] for r in rows]
        vals = [r["values"][name] for r in rows]
        table[name] = {"h": hs, "values": vals, "order": fit_order(hs, vals)}
    table["_wall_time"] = [r["wall_time"] for r in rows]
    return table


def _order_check(report, name, entry, lo, hi=None):
    """Pass when the fitted order is in [lo, hi] (a saturated study satisfies any lower bound)."""
    o = entry["order"]
    if o == "saturated":
        ok, crit = hi is None, f"order >= {lo:g}" if hi is None else f"slope in [{lo:g}, {hi:g}]"
    else:
        ok = bool(np.isfinite(o) and o >= lo and (hi is None or o <= hi))
        crit = f"order >= {lo:g}" if hi is None else f"slope in [{lo:g}, {hi:g}]"
    return report.add(Check(name, float(entry["values"][-1]), lo, ok, crit, order=o))


# ---------------------------------------------------------------------------
# dualize

def _duality_setup(config: ScenarioConfig):
    p = config.params
    if config.preset is not None:
        scen, defaults = S.duality_preset(config.preset)
    else:
        for key in ("RD",):
            if key not in p:
                raise ConfigError(f"dualize without a preset needs params.{key}")
        scen, defaults = None, {"N": 16, "T": 1.0, "initial": "pcm-geodesic", "shape": "rectangle"}
    defaults = dict(defaults)
    defaults.update({k: v for k, v in p.items() if k in ("N", "T", "initial", "shape", "CD", "random")})
    if scen is None or any(k in p for k in ("double", "RD", "G")) or "algebra" in config.files:
        model = _load_model(config)
        RD = np.asarray(p["RD"], float) if "RD" in p else scen.RD
        G = p.get("G", scen.G if scen is not None else "g")
        scen = DualityScenario(model, RD, G)
    return scen, defaults


def _load_model(config: ScenarioConfig) -> DoubleModel:
    if "algebra" in config.files:
        try:
            triple, grp = algebra_from_json(config.load("algebra"))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"algebra file: {exc}") from exc
        model = DoubleModel(triple, grp)
    else:
        name = config.params.get("double")
        if name is None and config.preset is not None:
            return S.duality_preset(config.preset)[0].model
        try:
            model = double_model(name or "su2")
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    return model


def _dualize_level(config: ScenarioConfig, level: int) -> dict:
    t0 = time.perf_counter()
    scen, d = _duality_setup(config)
    lat = LightConeLattice.square(int(d["N"]) * level, float(d["T"]), d.get("shape", "rectangle"))
    f = S.critical_map(scen, lat, d["initial"])
    dual = dualize(f, scen)
    fd = dual[0]
    _, rep = roundtrip(f, scen, dual=dual)
    vals = {k: rep[k] for k in ("el_residual", "flatness", "path_independence", "dual_el_residual",
                                "roundtrip_deviation")}
    if np.allclose(scen.model.algebra.c, 0) and d["initial"] == "dalembert" and scen.model.dim == 2:
        r = float(scen.background.r(scen.model.group.identity(()))[0, 0])
        exact = S.analytic_abelian_dual(lat, r, seed=0)
        vals["analytic_dual_error"] = float(np.max(np.abs(fd.coords()[..., 0] - exact)))
    if d.get("random", True):
        g = S.critical_map(scen, lat, f"random-smooth({config.seed})")
        vals["random_flatness"] = max_residual(flatness_residual(g, extract_AG(scen)))
    return {"h": lat.h1, "values": vals, "wall_time": time.perf_counter() - t0}


def run_dualize(config: ScenarioConfig, out: Path) -> Report:
    scen, d = _duality_setup(config)
    rep = Report("dualize", config.preset or "custom")
    I = scen.model.group.identity(())
    rep.data["background_r"] = scen.background.r(I)
    rep.data["dual_background_r"] = scen.dual_background.r(I)
    rep.data["lattice"] = {"N": d["N"], "T": d["T"], "levels": list(config.convergence_levels)}

    t0 = time.perf_counter()
    lat = LightConeLattice.square(int(d["N"]), float(d["T"]), d.get("shape", "rectangle"))
    f = S.critical_map(scen, lat, d["initial"])
    fd, base, _ = dualize(f, scen)
    f.to_csv(out / "f.csv")
    fd.to_csv(out / "f_dual.csv")
    rep.bound("el_residual", base["el_residual"], config.tol("el_residual", 1e-8), t0)
    xi = np.linspace(0.3, -0.2, scen.chart.g.shape[0])
    t0 = time.perf_counter()
    rep.bound("seed_equivariance", seed_equivariance(f, scen, xi), config.tol("seed_equivariance", 1e-9), t0)

    t0 = time.perf_counter()
    table = convergence_study(config, measure=_dualize_level)
    lo = config.tol("order", 1.9)
    for name in ("flatness", "dual_el_residual", "roundtrip_deviation", "analytic_dual_error"):
        if name in table:
            _order_check(rep, name, table[name], lo).wall_time = time.perf_counter() - t0
    if "random_flatness" in table:
        band = config.tol("random_band", 0.2)
        _order_check(rep, "random_flatness", table["random_flatness"], -band, band).wall_time = time.perf_counter() - t0
    rep.data["orders"] = {k: v for k, v in table.items() if not k.startswith("_")}
    rep.data["base_level"] = base
    return rep


# ---------------------------------------------------------------------------
# branes

def _branes_level(config: ScenarioConfig, level: int) -> dict:
    t0 = time.perf_counter()
    scen, d = _duality_setup(config)
    CD = np.atleast_2d(np.asarray(d.get("CD", [[1.0, 0.0]]), float))
    lat = LightConeLattice.square(int(d["N"]) * level, float(d["T"]), "wedge")
    bc = dirac_bc(scen.chart, scen.background, CD)
    f = S.critical_map(scen, lat, d["initial"], boundary=bc)
    fd, rep, _ = dualize(f, scen)
    a = brane_boundary_residual(f, scen.chart, scen.background, CD)
    b = brane_boundary_residual(fd, scen.dual_chart, scen.dual_background, CD)
    vals = {"boundary_membership": a["membership"], "boundary_beta": a["beta"],
            "dual_boundary_membership": b["membership"], "dual_boundary_beta": b["beta"],
            "dual_el_residual": rep["dual_el_residual"]}
    return {"h": lat.h1, "values": vals, "wall_time": time.perf_counter() - t0}


def run_branes(config: ScenarioConfig, out: Path) -> Report:
    config = config if config.preset is not None or "RD" in config.params else \
        ScenarioConfig(config.kind, "branes-abelian", config.files, config.params, config.tolerances,
                       config.seed, config.convergence_levels)
    scen, d = _duality_setup(config)
    CD = np.atleast_2d(np.asarray(d.get("CD", [[1.0, 0.0]]), float))
    rep = Report("branes", config.preset or "custom")
    t0 = time.perf_counter()
    tol = config.tol("leaf", 1e-10)
    for name, L, H, leaf, beta in S.leaf_presets():
        rep.bound(f"leaf_{name}", dirac_leaf_check(L, H, leaf, beta), tol, t0)
    side, dual = brane_transport(CD, scen)
    rep.data["side"] = {"kind": side.kind, "leaf_dim": side.leaf_dim, "beta": side.beta}
    rep.data["dual_side"] = {"kind": dual.kind, "leaf_dim": dual.leaf_dim, "beta": dual.beta}
    rep.bound("rel_residual", max(side.rel_residual, dual.rel_residual), config.tol("rel", 1e-8), t0)
    if scen.model.dim == 2:
        swapped = {side.kind, dual.kind} == {"neumann", "dirichlet"}
        rep.add(Check("neumann_dirichlet_swap", float(not swapped), 0.0, swapped, "kinds are {neumann, dirichlet}"))
    lat = LightConeLattice.square(int(d["N"]), float(d["T"]), "wedge")
    f = S.critical_map(scen, lat, d["initial"], boundary=dirac_bc(scen.chart, scen.background, CD))
    fd, _, _ = dualize(f, scen)
    f.to_csv(out / "f.csv")
    fd.to_csv(out / "f_dual.csv")
    t0 = time.perf_counter()
    table = convergence_study(config, measure=_branes_level)
    lo = config.tol("order", 1.9)
    for name in ("boundary_membership", "boundary_beta", "dual_boundary_membership", "dual_boundary_beta",
                 "dual_el_residual"):
        _order_check(rep, name, table[name], lo).wall_time = time.perf_counter() - t0
    rep.data["orders"] = {k: v for k, v in table.items() if not k.startswith("_")}
    return rep


# ---------------------------------------------------------------------------
# noether

def _noether_setup(config: ScenarioConfig):
    """(background, target, critical-map builder, [(name, section)])."""
    preset = config.preset or "semiabelian-su2"
    if preset == "wz-r3":
        tg = VectorTarget(3)
        bg = Background(r=ConstantMetric(np.eye(3)), H=S.h_presets()["volume"])

        def build(lat):
            ini, _ = dalembert(lat, dim=3, seed=config.seed + 5)
            return solve_sr(bg, lat, tg, ini)

        secs = [("wz-plus", S.wz_section(+1.0)), ("wz-minus", S.wz_section(-1.0)),
                ("translation-2", GeneralizedSection.vector(S.VectorField.coord(3, 2)))]
        return bg, tg, build, secs, {"N": 16, "T": 1.0}
    if preset == "pcm":
        scen, d = S.pcm_scenario(), {"N": 16, "T": 1.0, "initial": "pcm-geodesic"}
    else:
        scen, d = S.duality_preset(preset)
    d = dict(d)
    d.update({k: v for k, v in config.params.items() if k in ("N", "T", "initial")})
    return scen.sr(), scen.target, lambda lat: S.critical_map(scen, lat, d["initial"]), S.symmetries(scen), d


def _admitted(config, bg, tg, secs, pts):
    tol = config.tol("flow", 1e-10)
    return [(n, s) for n, s in secs if flow_preserves(s, bg, tg, pts) <= tol]


def _noether_level(config: ScenarioConfig, level: int) -> dict:
    t0 = time.perf_counter()
    bg, tg, build, secs, d = _noether_setup(config)
    lat = LightConeLattice.square(int(config.params.get("N", d["N"])) * level, float(d["T"]))
    f = build(lat)
    vals = {}
    for name, s in _admitted(config, bg, tg, secs, f.values[lat.mask()]):
        _, _, cl = noether_current(f, s, bg, check_tol=None)
        vals[f"closure_{name}"] = max_residual(cl)
        vals[f"flux_{name}"] = max_residual(cl) * lat.h1 * lat.h2
    return {"h": lat.h1, "values": vals, "wall_time": time.perf_counter() - t0}


def run_noether(config: ScenarioConfig, out: Path) -> Report:
    bg, tg, build, secs, d = _noether_setup(config)
    rep = Report("noether", config.preset or "semiabelian-su2")
    lat = LightConeLattice.square(int(config.params.get("N", d["N"])), float(d["T"]))
    f = build(lat)
    f.to_csv(out / "f.csv")
    pts = f.values[lat.mask()]
    flows = {n: flow_preserves(s, bg, tg, pts) for n, s in secs}
    rep.data["flow_preserves"] = flows
    admitted = [n for n, _ in _admitted(config, bg, tg, secs, pts)]
    rep.data["admitted"] = admitted
    if not admitted:
        raise ScenarioError("noether: no section passes flow_preserves")
    currents = {}
    for n, s in secs:
        if n in admitted:
            J1, J2, _ = noether_current(f, s, bg, check_tol=None)
            currents[n] = {"J1": J1, "J2": J2}
    _currents_csv(out / "currents.csv", lat, currents)
    t0 = time.perf_counter()
    table = convergence_study(config, measure=_noether_level)
    lo = config.tol("order", 1.9)
    exact = config.tol("exact", 1e-12)
    for n in admitted:
        entry = table[f"closure_{n}"]
        if all(v <= exact for v in table[f"flux_{n}"]["values"]):
            # translation-invariant linear problems conserve the current plaquette by plaquette
            rep.bound(f"flux_{n}", max(table[f"flux_{n}"]["values"]), exact, t0)
        else:
            _order_check(rep, f"closure_{n}", entry, lo).wall_time = time.perf_counter() - t0
    rep.data["orders"] = {k: v for k, v in table.items() if not k.startswith("_")}
    return rep


def _currents_csv(path, lat, currents):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "direction", "i", "j", "J"])
        for n, c in currents.items():
            for key in ("J1", "J2"):
                J = c[key]
                for i, j in zip(*np.nonzero(np.isfinite(J))):
                    w.writerow([n, key, int(i), int(j), repr(float(J[i, j]))])


_MEASURES = {"dualize": _dualize_level, "branes": _branes_level, "noether": _noether_level}


# ---------------------------------------------------------------------------
# axioms

def _axioms_inputs(config: ScenarioConfig):
    """[(name, H or None, dim)] plus explicit sections if a fields file is given."""
    if "fields" in config.files:
        data = config.load("fields")
        try:
            n = int(data["dim"])
            H = ClosedThreeForm(Form.from_json(n, data["H"])) if data.get("H") else None
            secs = [GeneralizedSection.from_json(n, s) for s in data.get("sections", [])]
            fun = Poly.from_json(n, data["function"]) if "function" in data else None
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"fields file: {exc}") from exc
        return [("file", H, n)], secs, fun
    presets = S.h_presets()
    if config.preset in (None, "standard"):
        names = ["zero"] if config.preset == "standard" else list(presets)
    elif config.preset in presets:
        names = [config.preset]
    else:
        raise ConfigError(f"unknown axioms preset {config.preset!r}")
    out = [(k, None if k == "zero" else presets[k], 3) for k in names]
    return out, [], None


def run_axioms(config: ScenarioConfig, out: Path) -> Report:
    cases, given, fun = _axioms_inputs(config)
    rep = Report("axioms", config.preset or ("file" if given else "all-presets"))
    npts = int(config.params.get("npts", 128))
    degree = int(config.params.get("degree", 3))
    tol = config.tol("axioms", 1e-9)
    rng = np.random.default_rng(config.seed)
    from .courant import Chart
    for name, H, n in cases:
        t0 = time.perf_counter()
        pts = Chart(n).sample(npts, seed=config.seed)
        secs = list(given)
        while len(secs) < 3:
            secs.append(GeneralizedSection.random(n, degree, rng, 0.5))
        f = fun if fun is not None else Poly.random(n, degree, rng, 0.5)
        res = axiom_residuals(H, *secs[:3], f, pts)
        rep.data[name] = res
        for ax, v in res.items():
            rep.bound(f"{name}_{ax}", v, tol, t0)
    return rep


# ---------------------------------------------------------------------------
# reduce

def run_reduce(config: ScenarioConfig, out: Path) -> Report:
    p = config.params
    model = _load_model(config)
    rep = Report("reduce", p.get("double", config.preset or "file"))
    kappa = p.get("kappa", "calibrate")
    t0 = time.perf_counter()
    if kappa == "calibrate":
        kappa = calibrate_kappa(model, tol=config.tol("equivariance", 1e-9))
    model = model.with_kappa(float(kappa))
    rep.data["kappa"] = float(kappa)
    rep.bound("equivariance", check_equivariance(model), config.tol("equivariance", 1e-9), t0)
    t0 = time.perf_counter()
    alg = model.algebra
    cs = {"maurer_cartan": chern_simons_residuals(maurer_cartan(alg)),
          "projected": chern_simons_residuals(projected_connection(alg, model.triple.g_basis,
                                                                    model.triple.gprime_basis))}
    for cname, r in cs.items():
        for k, v in r.items():
            rep.bound(f"chern_simons_{cname}_{k}", v, config.tol("chern_simons", 1e-9), t0)
    G = p.get("G", "g")
    red = reduce(model, G, p.get("splitting", "euclidean"), npts=int(p.get("npts", 100)),
                 box=float(p.get("box", 0.5)), seed=config.seed)
    t0 = time.perf_counter()
    ranks = red.fiber_rank()
    bad = int(np.sum(ranks != 2 * red.dim_base))
    rep.add(Check("fiber_rank", float(bad), 0.0, bad == 0, f"rank 2*{red.dim_base} at every point",
                  wall_time=time.perf_counter() - t0))
    tol8 = config.tol("reduction", 1e-8)
    pr = pullback_residuals(red, red.splitting)
    rep.bound("pullback_D", pr["D"], tol8, t0)
    rep.bound("pullback_G", pr["G"], tol8, t0)
    rep.bound("distribution_curvature", distribution_curvature_residual(red, red.splitting), tol8, t0)
    # a Lagrangian subalgebra C_D reduces to a Dirac structure: its H tensor vanishes on M/G
    CD = red.chart.chart
    rep.bound("subalgebra_dirac", float(np.max(np.abs(red.H_L(CD, "std")))), tol8, t0)
    HG = red.H_G()
    (out / "H_G.json").write_text(json.dumps(_jsonable({"theta": red.thetas, "H_G": HG, "kappa": kappa}),
                                             sort_keys=True))
    RD = np.asarray(p.get("RD", np.hstack([np.eye(red.dim_base), np.eye(red.dim_base)])), float)
    bg = transport_RD(model, G, RD)
    r = bg.r(red.points)
    _grid_csv(out / "r.csv", red.thetas, r)
    return rep


def _grid_csv(path, thetas, r):
    import csv
    n = r.shape[-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"theta{a}" for a in range(thetas.shape[1])] + [f"r{i}{j}" for i in range(n) for j in range(n)])
        for th, m in zip(thetas, r):
            w.writerow([repr(float(x)) for x in th] + [repr(float(x)) for x in m.ravel()])


# ---------------------------------------------------------------------------
# entry points

_RUNNERS = {"axioms": run_axioms, "reduce": run_reduce, "dualize": run_dualize, "branes": run_branes,
            "noether": run_noether}


def run(config: ScenarioConfig, out) -> Report:
    """Run a scenario; artifacts appear in `out` only if it completes."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".cad-", dir=out.parent))
    try:
        try:
            rep = _RUNNERS[config.kind](config, stage)
        except (ConfigError, FileNotFoundError, ScenarioError):
            raise
        except Exception as exc:
            raise ScenarioError(f"{config.kind}: {type(exc).__module__}.{type(exc).__name__}: {exc}") from exc
        (stage / "report.json").write_text(json.dumps(rep.to_json(), indent=1, sort_keys=True) + "\n")
        (stage / "timings.json").write_text(json.dumps(rep.timings(), indent=1, sort_keys=True) + "\n")
        out.mkdir(exist_ok=True)
        for item in stage.iterdir():
            shutil.move(str(item), str(out / item.name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="cad", description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--levels", help="comma-separated h-divisors, e.g. 1,2,4")
    args = ap.parse_args(argv)
    try:
        cfg = ScenarioConfig.from_file(args.config)
        if cfg.kind != args.kind:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.kind!r}")
        if args.levels:
            try:
                levels = tuple(int(x) for x in args.levels.split(","))
            except ValueError:
                raise ConfigError(f"bad --levels {args.levels!r}") from None
            cfg = ScenarioConfig(cfg.kind, cfg.preset, cfg.files, cfg.params, cfg.tolerances, cfg.seed, levels)
        threads()
    except FileNotFoundError as exc:
        print(f"cad: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"cad: config error: {exc}", file=sys.stderr)
        return 2
    try:
        rep = run(cfg, args.out)
    except ConfigError as exc:
        print(f"cad: config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioError as exc:
        print(f"cad: scenario error: {exc}", file=sys.stderr)
        return 3
    for line in rep.lines():
        print(line)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
