"""Configuration, experiment dispatch, sweeps and the command line.

A run is described by one TOML (or JSON) file::

    kind = "shoot"
    seed = 0

    [params]
    alpha = 0.5
    beta = 0.75
    lambda = 1.0
    dimension = 1

    [grid]
    n = 2049

Every run writes ``report.json`` plus CSV files into its output directory;
the report's ``manifest`` lists them.  CSVs use 17 significant digits so
identical configurations give byte-identical files.
"""
from __future__ import annotations

import argparse
import copy
import csv
import itertools
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from flatsol import __version__
from flatsol.errors import ConfigError, FlatsolError
from flatsol.grid import Ball, Field, Interval, build_grid, sample, write_field_csv

log = logging.getLogger("flatsol")

SCHEMA_VERSION = 1
KINDS = ("classify", "shoot", "nehari", "jmin", "evolve", "stability",
         "global-instability", "extinction", "spectrum", "sweep")

# allowed keys per section and their types; a tuple means "any of"
_NUM = (int, float)
SCHEMA = {
    "": {"kind": str, "seed": int, "out": str, "template": dict, "axes": dict,
         "label": str},
    "params": {"alpha": _NUM, "beta": _NUM, "lambda": _NUM, "dimension": int},
    "domain": {"type": str, "a": _NUM, "b": _NUM, "radius": _NUM},
    "grid": {"n": int},
    "evolution": {"dt": _NUM, "t_end": _NUM, "stride": int, "extinction_tol": _NUM,
                  "extinction_count": int, "reaction_substeps": int,
                  "dissipation_rtol": _NUM, "cap": _NUM, "store_snapshots": bool},
    "initial": {"shape": str, "amplitude": _NUM, "offset": _NUM},
    "perturbation": {"shape": str, "delta": _NUM},
    "groundstate": {"source": str},
    "stability": {"epsilon": _NUM},
    "global": {"r": _NUM, "y_cap": _NUM},
    "extinction": {"lambdas": list, "lambda_fractions": list},
    "spectrum": {"floor": _NUM, "mu": list},
}


# --- configuration --------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return tomllib.loads(text.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (values parsed as JSON when possible)."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except ValueError:
            value = raw
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return cfg


def validate_config(cfg: dict, allow_partial: bool = False) -> dict:
    """Check section/key names and value types; raises ConfigError naming the field."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    errors = []
    for key, value in cfg.items():
        if isinstance(value, dict) and key in SCHEMA and key != "":
            allowed = SCHEMA[key]
            for k, v in value.items():
                if k not in allowed:
                    errors.append(f"{key}.{k}: unknown field")
                elif not isinstance(v, allowed[k]) or isinstance(v, bool) and allowed[k] is not bool:
                    errors.append(f"{key}.{k}: expected {_typename(allowed[k])}, got {v!r}")
        elif key in SCHEMA[""]:
            if not isinstance(value, SCHEMA[""][key]):
                errors.append(f"{key}: expected {_typename(SCHEMA[''][key])}")
        else:
            errors.append(f"{key}: unknown field")
    kind = cfg.get("kind")
    if kind is None and not allow_partial:
        errors.append("kind: missing")
    elif kind is not None and kind not in KINDS:
        errors.append(f"kind: must be one of {', '.join(KINDS)}")
    if kind not in (None, "sweep") and not allow_partial and "params" not in cfg:
        errors.append("params: missing section")
    if errors:
        raise ConfigError("invalid config: " + "; ".join(errors))
    return cfg


def _typename(t):
    if isinstance(t, tuple):
        return " or ".join(x.__name__ for x in t)
    return t.__name__


def _params(cfg):
    from flatsol.model import make_params
    p = cfg.get("params", {})
    for k in ("alpha", "beta"):
        if k not in p:
            raise ConfigError(f"params.{k}: missing")
    try:
        return make_params(float(p["alpha"]), float(p["beta"]), float(p.get("lambda", 1.0)),
                           int(p.get("dimension", 1)))
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None


def _domain(cfg, params, default=None):
    d = cfg.get("domain")
    if d is None:
        if default is not None:
            return default
        return Interval(0.0, math.pi) if params.dimension == 1 else Ball(params.dimension, 1.0)
    kind = d.get("type", "interval")
    try:
        if kind == "interval":
            if params.dimension != 1:
                raise ConfigError("domain.type: interval needs params.dimension = 1")
            return Interval(float(d.get("a", 0.0)), float(d.get("b", math.pi)))
        if kind == "ball":
            return Ball(params.dimension, float(d.get("radius", 1.0)))
        if kind == "support":
            return None
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.type: unknown value {kind!r}")


def _grid(cfg, params, default_n=1025, domain=None):
    n = int(cfg.get("grid", {}).get("n", default_n))
    dom = domain if domain is not None else _domain(cfg, params)
    return build_grid(dom, n)


def _evolution(cfg, **defaults):
    from flatsol.parabolic import EvolutionConfig
    e = {**defaults, **cfg.get("evolution", {})}
    try:
        return EvolutionConfig(**e)
    except TypeError as exc:
        raise ConfigError(f"evolution: {exc}") from None


# --- output helpers ----------------------------------------------------------------

@dataclass
class RunReport:
    kind: str
    config: dict
    headline: dict
    manifest: list = dc_field(default_factory=list)
    wall_clock: float = 0.0
    out_dir: Path | None = None

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "flatsol_version": __version__,
                "kind": self.kind, "config": self.config, "headline": self.headline,
                "manifest": self.manifest, "wall_clock_s": self.wall_clock}


class _Outputs:
    def __init__(self, out_dir: Path):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        p = self.dir / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def table(self, name: str, header, rows):
        with self.path(name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])

    def field(self, name: str, fld: Field):
        write_field_csv(fld, self.path(name))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if x is None:
        return ""
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


# --- experiments ---------------------------------------------------------------------

def _ground_state(cfg, params, grid=None):
    from flatsol.groundstate import find_flat_profile, j_minimize, nehari_minimize
    source = cfg.get("groundstate", {}).get("source")
    if source is None:
        source = "flat"
    n = int(cfg.get("grid", {}).get("n", 1025))
    if source == "flat":
        dom = _domain(cfg, params, default=None) if "domain" in cfg else None
        return find_flat_profile(params, n=n, domain=dom)
    grid = grid or _grid(cfg, params)
    if source == "nehari":
        return nehari_minimize(params, grid)
    if source == "jmin":
        return j_minimize(params, grid)
    raise ConfigError(f"groundstate.source: unknown value {source!r}")


def _exp_classify(cfg, out):
    from flatsol.model import classify_exponents, critical_beta, fibering_constants, \
        pohozaev_determinant
    p = cfg.get("params", {})
    try:
        a, b, N = float(p["alpha"]), float(p["beta"]), int(p.get("dimension", 1))
    except KeyError as exc:
        raise ConfigError(f"params.{exc.args[0]}: missing") from None
    lab = classify_exponents(a, b, N)
    head = {"label": lab.label.value, "discriminant": lab.discriminant,
            "critical_beta": critical_beta(a, N), "determinant": pohozaev_determinant(a, b, N)}
    if b < 1:
        c0, c1 = fibering_constants(a, b)
        head.update(c0=c0, c1=c1)
    return head


def _exp_shoot(cfg, out):
    from flatsol.groundstate import equation_residual, verify_lemma1
    from flatsol.spectral import linearized_mu1, rayleigh_at
    params = _params(cfg)
    gs = _ground_state({**cfg, "groundstate": {"source": "flat"}}, params)
    out.field("profile.csv", gs.field)
    head = gs.to_json()
    head["pohozaev_ratio"] = gs.pohozaev_residual / gs.scale
    head["equation_residual"] = equation_residual(gs)
    try:
        head["lemma1"] = verify_lemma1(gs).to_json()
    except FlatsolError as exc:
        head["lemma1"] = {"error": str(exc)}
    try:
        eig = linearized_mu1(gs)
        head["mu1"] = eig.eigenvalue
        head["mu1_floor_sensitivity"] = eig.floor_sensitivity
        head["rayleigh_at_u"] = rayleigh_at(gs, gs.field)
        out.field("psi1.csv", eig.eigenfield)
    except FlatsolError as exc:
        head["mu1"] = {"error": str(exc)}
    return head


def _exp_variational(cfg, out, method):
    from flatsol.fibering import estimate_Lambda
    from flatsol.groundstate import j_minimize, nehari_minimize
    params = _params(cfg)
    grid = _grid(cfg, params)
    head = {}
    if method == "nehari":
        est = estimate_Lambda(params, grid)
        head.update(Lambda0_estimate=est.Lambda0, Lambda1_estimate=est.Lambda1)
        gs = nehari_minimize(params, grid)
    else:
        gs = j_minimize(params, grid)
    out.field("profile.csv", gs.field)
    head.update(gs.to_json())
    return head


def _initial_field(cfg, params, grid):
    init = cfg.get("initial", {})
    shape = init.get("shape", "sine")
    amp = float(init.get("amplitude", 1.0))
    if shape == "sine":
        if grid.is_ball:
            from flatsol.spectral import principal_dirichlet_eigen
            e = principal_dirichlet_eigen(grid).eigenfield
            return e * (amp / float(np.max(e.values)))
        a, b = grid.domain.a, grid.domain.b
        return sample(grid, lambda x: amp * np.sin(np.pi * (x - a) / (b - a)))
    if shape == "eigenfunction":
        from flatsol.spectral import principal_dirichlet_eigen
        e = principal_dirichlet_eigen(grid).eigenfield
        return e * (amp / float(np.max(e.values)))
    if shape == "constant":
        v = np.full(grid.n, amp)
        v[grid.dirichlet_mask] = 0.0
        return Field(grid, v)
    if shape == "groundstate":
        gs = _ground_state(cfg, params, grid)
        vals = amp * np.asarray(gs.field.values) + float(init.get("offset", 0.0))
        vals[gs.field.grid.dirichlet_mask] = 0.0
        return Field(gs.field.grid, vals)
    raise ConfigError(f"initial.shape: unknown value {shape!r}")


def _write_traj(out, traj, name="trajectory.csv"):
    traj.write_csv(out.path(name))
    if traj.snapshots is not None:
        for k, vals in enumerate(traj.snapshots):
            out.field(f"snapshots/{name.rsplit('.', 1)[0]}_{k:05d}.csv", Field(traj.grid, vals))


def _traj_head(traj):
    from flatsol.parabolic import extinction_time
    return {"stop_reason": traj.stop_reason, "t_final": float(traj.times[-1]),
            "energy_initial": float(traj.column("energy")[0]),
            "energy_final": float(traj.column("energy")[-1]),
            "max_energy_increase": traj.max_energy_increase,
            "linf_final": float(traj.column("linf")[-1]),
            "extinction_time": extinction_time(traj)}


def _exp_evolve(cfg, out):
    from flatsol.parabolic import evolve
    params = _params(cfg)
    grid = _grid(cfg, params)
    v0 = _initial_field(cfg, params, grid)
    traj = evolve(v0, params, _evolution(cfg))
    _write_traj(out, traj)
    return _traj_head(traj)


def _exp_stability(cfg, out):
    from flatsol.parabolic import make_perturbation, stability_experiment
    params = _params(cfg)
    gs = _ground_state(cfg, params)
    pcfg = cfg.get("perturbation", {})
    shape = pcfg.get("shape", "eigenfunction")
    delta = float(pcfg.get("delta", 1e-2))
    pert = make_perturbation(gs.field.grid, shape, delta, seed=int(cfg.get("seed", 0)),
                             base=gs.field)
    eps = float(cfg.get("stability", {}).get("epsilon", 5e-2))
    verdict = stability_experiment(gs, pert, _evolution(cfg, t_end=10.0), epsilon=eps)
    out.field("groundstate.csv", gs.field)
    _write_traj(out, verdict.trajectory)
    head = {"verdict": verdict.to_json(), "groundstate": gs.to_json()}
    if params.dimension >= 1:
        from flatsol.model import classify_exponents, Regime
        lab = classify_exponents(params.alpha, params.beta, params.dimension).label
        head["regime"] = lab.value
        if lab is Regime.STABLE and verdict.kind.value == "Departed":
            head["note"] = ("departure in the stable set points at the numerical setup "
                            "(resolution, horizon or the uniqueness hypothesis)")
    return head


def _exp_global(cfg, out):
    from flatsol.groundstate import j_minimize
    from flatsol.parabolic import global_instability_experiment
    params = _params(cfg)
    grid = _grid(cfg, params)
    gs = j_minimize(params, grid)
    g = cfg.get("global", {})
    res = global_instability_experiment(gs, float(g.get("r", 1.05)),
                                        _evolution(cfg, t_end=20.0),
                                        y_cap=float(g.get("y_cap", 1e8)))
    out.field("groundstate.csv", gs.field)
    _write_traj(out, res.verdict.trajectory)
    out.table("slope_check.csv", ["t", "y", "dydt", "minus_two_phi1", "in_well"],
              zip(res.verdict.trajectory.times, res.y, res.dydt, res.minus_two_phi1,
                  res.in_well))
    return res.to_json()


def _exp_extinction(cfg, out):
    from flatsol.parabolic import evolve, extinction_time
    from flatsol.spectral import principal_dirichlet_eigen
    params = _params(cfg)
    grid = _grid(cfg, params)
    lam1 = principal_dirichlet_eigen(grid).eigenvalue
    e = cfg.get("extinction", {})
    if "lambdas" in e:
        lams = [float(x) for x in e["lambdas"]]
    else:
        lams = [float(f) * lam1 for f in e.get("lambda_fractions", [0.0, 0.25, 0.5, 0.75])]
    v0 = _initial_field(cfg, params, grid)
    rows = []
    for lam in lams:
        p = params.with_lambda(lam)
        traj = evolve(v0, p, _evolution(cfg, t_end=20.0, stride=10))
        _write_traj(out, traj, f"trajectory_lambda_{len(rows):02d}.csv")
        rows.append((lam, lam / lam1, extinction_time(traj), traj.stop_reason,
                     float(traj.column("linf")[-1])))
    out.table("extinction_times.csv",
              ["lambda", "lambda_over_lambda1", "extinction_time", "stop_reason", "linf_final"],
              rows)
    times = [r[2] for r in rows]
    finite = [t for t in times if t is not None]
    mono = all(a <= b for a, b in zip(finite, finite[1:])) and len(finite) == len(times)
    return {"lambda1": lam1, "lambdas": lams, "extinction_times": times,
            "nondecreasing_in_lambda": mono}


def _exp_spectrum(cfg, out):
    from flatsol.spectral import hardy_ratio, linearized_mu1, principal_dirichlet_eigen, rayleigh_at
    params = _params(cfg)
    grid = _grid(cfg, params)
    eig = principal_dirichlet_eigen(grid)
    out.field("phi1.csv", eig.eigenfield)
    head = {"lambda1": eig.eigenvalue, "residual": eig.residual}
    s = cfg.get("spectrum", {})
    if params.lam > 0:
        mus = [float(m) for m in s.get("mu", [0.0, 0.5, 1.0])]
        rows = []
        for mu in mus:
            r = hardy_ratio(mu, params, grid, "r") if mu >= 0 else None
            r1 = hardy_ratio(mu if mu <= 0 else -mu, params, grid, "r1")
            rows.append((mu, r, -abs(mu), r1))
        out.table("hardy_ratios.csv", ["mu", "r", "mu_r1", "r1"], rows)
        head["hardy_r0"] = hardy_ratio(0.0, params, grid, "r")
    if "groundstate" in cfg:
        gs = _ground_state(cfg, params, grid)
        lin = linearized_mu1(gs, floor=float(s.get("floor", 1e-8)))
        out.field("psi1.csv", lin.eigenfield)
        head["linearized"] = lin.to_json()
        head["rayleigh_at_u"] = rayleigh_at(gs, gs.field)
    return head


_DISPATCH = {
    "classify": _exp_classify,
    "shoot": _exp_shoot,
    "nehari": lambda c, o: _exp_variational(c, o, "nehari"),
    "jmin": lambda c, o: _exp_variational(c, o, "jmin"),
    "evolve": _exp_evolve,
    "stability": _exp_stability,
    "global-instability": _exp_global,
    "extinction": _exp_extinction,
    "spectrum": _exp_spectrum,
}


def run(cfg: dict, out_dir) -> RunReport:
    """Execute one experiment described by ``cfg`` and write its outputs."""
    cfg = validate_config(cfg)
    kind = cfg["kind"]
    if kind == "sweep":
        return sweep(cfg, out_dir)
    np.random.seed(int(cfg.get("seed", 0)))
    out = _Outputs(Path(out_dir))
    t0 = time.perf_counter()
    head = _DISPATCH[kind](cfg, out)
    rep = RunReport(kind, cfg, _jsonable(head), sorted(out.files),
                    time.perf_counter() - t0, out.dir)
    with (out.dir / "report.json").open("w", encoding="utf-8") as fh:
        json.dump(rep.to_json(), fh, indent=2, sort_keys=True)
    return rep


# --- sweeps -------------------------------------------------------------------

def _axis_values(spec):
    if isinstance(spec, list):
        return spec
    if isinstance(spec, dict) and {"start", "stop", "num"} <= set(spec):
        return [float(x) for x in np.linspace(spec["start"], spec["stop"], int(spec["num"]))]
    raise ConfigError(f"axes: expected a list or {{start, stop, num}}, got {spec!r}")


_AXIS_KEYS = {"alpha": ("params", "alpha"), "beta": ("params", "beta"),
              "lambda": ("params", "lambda"), "dimension": ("params", "dimension"),
              "N": ("params", "dimension")}


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        elif not isinstance(v, (list, dict)):
            yield f"{prefix}{k}", v


def _sweep_point(args):
    index, cfg, out_dir = args
    try:
        rep = run(cfg, out_dir)
        flat = dict(_flatten(rep.headline))
        return index, "ok", "", flat
    except FlatsolError as exc:
        return index, "error", f"{type(exc).__name__}: {exc}", {}
    except Exception as exc:  # crash isolation: record and continue
        return index, "crash", f"{type(exc).__name__}: {exc}", {}


def sweep(cfg: dict, out_dir, parallel: int = 1) -> RunReport:
    """Run the template once per point of the Cartesian product of ``axes``."""
    template = cfg.get("template")
    axes = cfg.get("axes")
    if not isinstance(template, dict) or not isinstance(axes, dict) or not axes:
        raise ConfigError("sweep needs a 'template' table and a non-empty 'axes' table")
    if template.get("kind") in (None, "sweep"):
        raise ConfigError("template.kind: must name a non-sweep experiment")
    names = list(axes)
    for n in names:
        if n not in _AXIS_KEYS:
            raise ConfigError(f"axes.{n}: unknown axis (use alpha, beta, lambda, dimension)")
    values = [_axis_values(axes[n]) for n in names]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for idx, combo in enumerate(itertools.product(*values)):
        c = copy.deepcopy(template)
        c.setdefault("seed", int(cfg.get("seed", 0)))
        for n, v in zip(names, combo):
            sec, key = _AXIS_KEYS[n]
            c.setdefault(sec, {})[key] = int(v) if key == "dimension" else v
        jobs.append((idx, c, out_dir / f"point_{idx:05d}"))
    t0 = time.perf_counter()
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        results = [_sweep_point(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    keys = sorted({k for r in results for k in r[3]})
    header = ["index", *names, "status", "error", *keys]
    rows = []
    for (idx, c, _), (_, status, err, flat) in zip(jobs, results):
        coords = [c[_AXIS_KEYS[n][0]][_AXIS_KEYS[n][1]] for n in names]
        rows.append([idx, *coords, status, err, *[flat.get(k) for k in keys]])
    out = _Outputs(out_dir)
    out.table("summary.csv", header, rows)
    n_ok = sum(r[1] == "ok" for r in results)
    head = {"points": len(jobs), "ok": n_ok, "failed": len(jobs) - n_ok}
    if template["kind"] == "classify":
        labels = [flat.get("label") for _, s, _, flat in results if s == "ok"]
        for lab in ("StableSet", "UnstableSet", "OnCurve"):
            head[f"count_{lab}"] = labels.count(lab)
        head["fraction_StableSet"] = labels.count("StableSet") / len(labels) if labels else 0.0
    rep = RunReport("sweep", cfg, head, out.files, time.perf_counter() - t0, out_dir)
    with (out_dir / "report.json").open("w", encoding="utf-8") as fh:
        json.dump(rep.to_json(), fh, indent=2, sort_keys=True)
    return rep


# --- command line -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flatsol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"flatsol {__version__}")
    sub = ap.add_subparsers(dest="kind", required=True)
    for k in KINDS:
        sp = sub.add_parser(k, help=f"run a {k} experiment")
        sp.add_argument("--config", type=Path, help="TOML or JSON experiment file")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--parallel", type=int, default=1, help="sweep worker processes")
        sp.add_argument("--seed", type=int, default=None, help="random seed override")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field, e.g. params.alpha=0.3")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        cfg = apply_overrides(cfg, args.overrides)
        if cfg.get("kind", args.kind) != args.kind:
            raise ConfigError(f"kind: config says {cfg['kind']!r} but the subcommand is "
                              f"{args.kind!r}")
        cfg["kind"] = args.kind
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = args.out or Path(cfg.pop("out", f"runs/{args.kind}"))
        cfg.pop("out", None)
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        if args.kind == "sweep":
            validate_config(cfg)
            rep = sweep(cfg, out, parallel=args.parallel)
        else:
            rep = run(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FlatsolError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            safe = {k: v for k, v in diag.items() if isinstance(v, (int, float, str))}
            print(f"diagnostics: {json.dumps(safe, default=str)}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps({"kind": rep.kind, "out": str(rep.out_dir), "headline": rep.headline},
                     default=str, indent=2))
    return 0
