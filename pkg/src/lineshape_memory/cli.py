"""Command-line driver: single computations and config-driven experiments.

Every subcommand writes plain CSV or JSON.  Exit codes: 0 on success, 2 for
bad arguments or configs, 3 when a computation fails numerically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from . import afc
from .kernelopt import (
    KernelError,
    LadderConfig,
    RungFailure,
    build_kernel,
    kernel_grid,
    optimize_lineshape,
    random_profile,
    rectangularity,
    svd_modes,
)
from .lineshape import FrequencyGrid, InvalidLineshapeError, Lineshape, normalize, perturb_quadratic
from .optimizer import OptimizerConfig, PowerConstraint, optimize_control
from .solver import ControlParams, InstabilityError, MemoryParams, SimGrid, run_memory
from .susceptibility import EitParams, NoWindowError, SingularPointError, compute_curve, eit_metrics

log = logging.getLogger("lineshape_memory")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (ArithmeticError, InstabilityError, KernelError, RungFailure, NoWindowError,
                    SingularPointError, np.linalg.LinAlgError)

OPTIMIZE_COLUMNS = ["d", "tau_gamma", "lineshape", "eta", "theta", "delay", "duration", "omega0_sq"]
COMPARE_COLUMNS = ["d", "tau_gamma", "max_power", "eta_eit", "theta", "delay", "duration",
                   "achieved_power", "finesse", "eta_afc", "winner", "above_crossover", "note"]
SUSCEPTIBILITY_COLUMNS = ["delta", "re_chi", "im_chi", "im_chi_normalized", "group_metric"]
TRACE_COLUMNS = ["phase", "tau", "a_in2", "a_trans2", "a_out2", "p_tot2", "b_tot2"]
TG_AFC_OVERESTIMATE = 1.0
EXPERIMENTS = ["fig2_susceptibility", "fig3_sweep", "fig4_comparison", "fig5_kernel", "lineshape_opt"]


class ConfigError(ValueError):
    """Invalid arguments or experiment configuration."""


# ---------------------------------------------------------------- config

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}
_names = {"type": "array", "items": {"enum": ["rectangular", "gaussian", "lorentzian"]}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment", "grids"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": EXPERIMENTS},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "fast": {"type": "boolean"},
        "grids": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma_i": _pos, "omega_c": {"type": "number", "minimum": 0}, "delta_cap": _num,
                "n_points": {"type": "integer", "minimum": 3}, "span": _pos,
                "lineshapes": _names, "lineshape": {"enum": ["rectangular", "gaussian", "lorentzian"]},
                "d": {"oneOf": [_pos, _pos_list]}, "tau_gamma": {"oneOf": [_pos, _pos_list]},
                "max_power": _pos_list, "power_per_tau": {"type": "boolean"},
                "power_convention": {"enum": ["verbatim", "peak"]},
                "restarts": {"type": "integer", "minimum": 0},
                "depth": {"enum": ["area", "peak"]},
                "theta": {"type": "number", "minimum": 0}, "delay": _num, "duration": _pos,
                "dt": _pos, "nz": {"type": "integer", "minimum": 1},
                "starts": {"type": "array", "minItems": 1,
                           "items": {"type": "string", "pattern": "^(rectangular|quadratic[+-]|random[0-9]+)$"}},
                "rungs": {"type": "integer", "minimum": 2}, "nodes": {"type": "integer", "minimum": 4},
                "spline_span": _pos,
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"experiment": {"const": "fig2_susceptibility"}}},
         "then": {"properties": {"grids": {"required": ["gamma_i", "omega_c", "lineshapes"]}}}},
        {"if": {"properties": {"experiment": {"const": "fig3_sweep"}}},
         "then": {"properties": {"grids": {"required": ["d", "tau_gamma", "lineshapes"],
                                           "properties": {"d": _pos_list, "tau_gamma": _pos_list}}}}},
        {"if": {"properties": {"experiment": {"const": "fig4_comparison"}}},
         "then": {"properties": {"grids": {"required": ["d", "tau_gamma", "max_power"],
                                           "properties": {"d": _pos, "tau_gamma": _pos_list}}}}},
        {"if": {"properties": {"experiment": {"const": "fig5_kernel"}}},
         "then": {"properties": {"grids": {"required": ["d", "tau_gamma", "lineshape", "theta", "delay", "duration"],
                                           "properties": {"d": _pos, "tau_gamma": _pos}}}}},
        {"if": {"properties": {"experiment": {"const": "lineshape_opt"}}},
         "then": {"properties": {"grids": {"required": ["d", "tau_gamma", "theta", "delay", "duration", "starts"],
                                           "properties": {"d": _pos, "tau_gamma": _pos}}}}},
    ],
}


@dataclass
class ExperimentConfig:
    experiment: str
    grids: dict
    seed: int = 0
    output_dir: str = "results"
    fast: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            raise ConfigError(f"{err.json_path}: {err.message}")
        return cls(data["experiment"], data["grids"], data.get("seed", 0),
                   data.get("output_dir", "results"), data.get("fast", False))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "grids": self.grids, "seed": self.seed,
                "output_dir": self.output_dir, "fast": self.fast}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------- helpers

def resolve_jobs(flag: int | None) -> int:
    """Worker count: LML_JOBS overrides --jobs; defaults to 1."""
    env = os.environ.get("LML_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError as err:
            raise ConfigError(f"LML_JOBS must be an integer, got {env!r}") from err
    else:
        jobs = 1 if flag is None else flag
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("lineshape-memory", "numpy", "scipy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _lineshape(name: str, hwhm: float = 1.0) -> Lineshape:
    try:
        return Lineshape.named(name, hwhm)
    except (InvalidLineshapeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _start_profile(name: str, grid: FrequencyGrid, nodes: int, span: float) -> Lineshape:
    if name == "rectangular":
        return Lineshape.rectangular()
    if name in ("quadratic+", "quadratic-"):
        return perturb_quadratic(Lineshape.rectangular(), 0.1 if name.endswith("+") else -0.1, grid)
    if name.startswith("random"):
        return random_profile(int(name[6:]), nodes, span, grid=grid)
    path = Path(name)
    if path.suffix == ".json" and path.exists():
        return normalize(Lineshape.from_json(path), grid)
    raise ConfigError(f"unknown start profile {name!r}")


# ---------------------------------------------------------------- pipelines

def susceptibility_rows(lineshape: Lineshape, params: EitParams, n_points: int, span: float) -> list[dict]:
    curve = compute_curve(lineshape, params, n_points=n_points, span=span)
    norm = curve.normalized_absorption
    return [{"delta": float(x), "re_chi": float(c.real), "im_chi": float(c.imag),
             "im_chi_normalized": float(a), "group_metric": float(g)}
            for x, c, a, g in zip(curve.detunings, curve.chi, norm, curve.group_metric)]


def compare_eit_afc(d: float, tau_gamma_grid, power_grid, *, power_per_tau: bool = False,
                    convention: str = "verbatim", config: OptimizerConfig | None = None,
                    jobs: int = 1) -> list[dict]:
    """Constrained-optimal EIT (Rectangular) against finesse-optimized AFC per cell.

    ``power_grid`` holds max|Omega|^2 in gamma_i^2, or in gamma_i / tau_FWHM
    when ``power_per_tau`` is set; ``convention`` is passed to
    :class:`PowerConstraint`.
    """
    if not d > 0:
        raise ConfigError("optical depth must be > 0")
    finesse, eta_afc = afc.optimize_finesse(d)
    cells = []
    for tg in tau_gamma_grid:
        for p in power_grid:
            cells.append((d, tg, p * (1.0 / tg if power_per_tau else 1.0), convention, config))
    results = _map(_compare_cell, cells, jobs)
    rows = []
    for (d_, tg, p, _, _), res in zip(cells, results):
        eta_eit, ctrl, achieved = res
        rows.append({
            "d": d_, "tau_gamma": tg, "max_power": p, "eta_eit": eta_eit,
            "theta": ctrl.theta, "delay": ctrl.delay, "duration": ctrl.duration, "achieved_power": achieved,
            "finesse": finesse, "eta_afc": eta_afc, "winner": "EIT" if eta_eit > eta_afc else "AFC",
            "above_crossover": p > 4.0 / tg,
            "note": "AFC value overestimated" if tg <= TG_AFC_OVERESTIMATE else "",
        })
    return rows


def _compare_cell(args):
    d, tg, p, convention, config = args
    res = optimize_control(MemoryParams(d, tg), Lineshape.rectangular(), PowerConstraint(p, convention), config)
    return res.efficiency, res.control, res.achieved_power


def _optimize_cell(args):
    mem, ls, constraint, config, start = args
    return optimize_control(mem, ls, constraint, config, start)


def _map(func, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(min(jobs, len(items))) as pool:
        return list(pool.map(func, items))


def _sweep_chain(args):
    """Warm-started sweep over memory points for one lineshape; failures recorded per point."""
    mems, ls, constraint, config = args
    out, start = [], None
    for mem in mems:
        try:
            res = optimize_control(mem, ls, constraint, config, start)
        except NUMERICAL_ERRORS as err:
            out.append({"d": mem.d, "tau_gamma": mem.tau_gamma, "lineshape": ls.kind.value, "error": str(err)})
            continue
        out.append(res.row())
        if not res.low_confidence:
            start = res.control
    return out


@dataclass
class Manifest:
    config: dict
    inputs_sha256: str
    versions: dict
    outputs: dict = field(default_factory=dict)
    cells: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def failed(self) -> list:
        return [c for c in self.cells if c.get("status") == "failed"]

    def to_dict(self) -> dict:
        return {"config": self.config, "inputs_sha256": self.inputs_sha256, "versions": self.versions,
                "outputs": self.outputs, "cells": self.cells, "runtime_s": self.runtime_s}


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> Manifest:
    """Run one configured experiment; writes artifacts and ``manifest.json`` to ``output_dir``."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(config.to_dict(), config.digest(), _versions())
    t0 = time.perf_counter()
    g = config.grids
    written = []

    def write(name, text):
        path = out_dir / name
        path.write_text(text)
        written.append(path)

    def cell(name, func):
        t = time.perf_counter()
        try:
            func()
            manifest.cells.append({"cell": name, "status": "ok", "runtime_s": time.perf_counter() - t})
        except NUMERICAL_ERRORS as err:
            manifest.cells.append({"cell": name, "status": "failed", "error": str(err),
                                   "runtime_s": time.perf_counter() - t})

    if config.experiment == "fig2_susceptibility":
        params = EitParams(g["gamma_i"], g["omega_c"], g.get("delta_cap", 0.0))
        n_points = g.get("n_points", 1001 if config.fast else 4001)
        metrics = {}

        def fig2(name):
            ls = Lineshape.named(name, params.gamma_i)
            rows = susceptibility_rows(ls, params, n_points, g.get("span", 2.0))
            write(f"susceptibility_{name}.csv", csv_text(SUSCEPTIBILITY_COLUMNS, rows))
            curve = compute_curve(ls, params, n_points=n_points, span=g.get("span", 2.0))
            metrics[name] = eit_metrics(curve)

        for name in g["lineshapes"]:
            cell(name, lambda name=name: fig2(name))
        write("eit_metrics.json", _json(metrics))

    elif config.experiment == "fig3_sweep":
        ocfg = OptimizerConfig(restarts=g.get("restarts", 1 if config.fast else 3), seed=config.seed)
        mems = [MemoryParams(d, tg, depth=g.get("depth", "area")) for d in g["d"] for tg in g["tau_gamma"]]
        lss = [Lineshape.named(n) for n in g["lineshapes"]]
        constraint = (PowerConstraint(g["max_power"][0], g.get("power_convention", "verbatim"))
                      if "max_power" in g else PowerConstraint())
        chains = _map(_sweep_chain, [(mems, ls, constraint, ocfg) for ls in lss], jobs)
        rows = []
        for chain in chains:
            for row in chain:
                name = f"{row['lineshape']}:d={row['d']}:tg={row['tau_gamma']}"
                if "error" in row:
                    manifest.cells.append({"cell": name, "status": "failed", "error": row["error"]})
                else:
                    manifest.cells.append({"cell": name, "status": "ok"})
                    rows.append(row)
        write("sweep.csv", csv_text(OPTIMIZE_COLUMNS, rows))

    elif config.experiment == "fig4_comparison":
        ocfg = OptimizerConfig(restarts=g.get("restarts", 1 if config.fast else 3), seed=config.seed)

        def fig4():
            rows = compare_eit_afc(g["d"], g["tau_gamma"], g["max_power"],
                                   power_per_tau=g.get("power_per_tau", False),
                                   convention=g.get("power_convention", "verbatim"), config=ocfg, jobs=jobs)
            write("comparison.csv", csv_text(COMPARE_COLUMNS, rows))

        cell("comparison", fig4)

    elif config.experiment == "fig5_kernel":
        mem = MemoryParams(g["d"], g["tau_gamma"], depth=g.get("depth", "area"))
        ctrl = ControlParams(g["theta"], g["delay"], g["duration"])
        grid = kernel_grid(g.get("dt", 0.05 if config.fast else 0.025), g.get("nz", 30 if config.fast else 50))

        def fig5():
            kernel = build_kernel(mem, ctrl, Lineshape.named(g["lineshape"]), grid, jobs=jobs)
            _write_kernel(kernel, svd_modes(kernel), out_dir, {"mem": mem.__dict__, "ctrl": ctrl.__dict__})
            written.extend([out_dir / "kernel.npy", out_dir / "kernel.json", out_dir / "singular_values.csv"])

        cell("kernel", fig5)

    elif config.experiment == "lineshape_opt":
        mem = MemoryParams(g["d"], g["tau_gamma"], depth=g.get("depth", "area"))
        ctrl = ControlParams(g["theta"], g["delay"], g["duration"])
        lcfg = LadderConfig.fast() if config.fast else LadderConfig()
        lcfg = LadderConfig(**{**lcfg.__dict__, **{k: g[k] for k in ("rungs", "nodes", "dt", "nz") if k in g}})
        if "spline_span" in g:
            lcfg = LadderConfig(**{**lcfg.__dict__, "span": g["spline_span"]})
        freq = lcfg.grid().freq
        for name in g["starts"]:
            def ladder(name=name):
                res = optimize_lineshape(mem, ctrl, _start_profile(name, freq, lcfg.nodes, lcfg.span), lcfg, jobs=jobs)
                write(f"trace_{name}.csv", csv_text(list(res.trace[0]), res.trace))
                write(f"lineshape_{name}.json", res.lineshape.to_json() + "\n")
            cell(name, ladder)

    manifest.outputs = {p.name: _sha256(p) for p in written}
    manifest.runtime_s = time.perf_counter() - t0
    (out_dir / "manifest.json").write_text(_json(manifest.to_dict()))
    return manifest


def _write_kernel(kernel, modes, out_dir: Path, params: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "kernel.npy", kernel.k)
    sidecar = {
        "matrix": "kernel.npy", "shape": list(kernel.k.shape), "dtype": "complex128",
        "tau_out": [float(kernel.tau_out[0]), float(kernel.tau_out[-1]), kernel.dt_out],
        "tau_in": [float(kernel.tau_in[0]), float(kernel.tau_in[-1]), kernel.dt_in],
        "params": params, "optimal_efficiency": modes.optimal_efficiency,
    }
    (out_dir / "kernel.json").write_text(_json(sidecar))
    rows = [{"index": i, "singular_value": float(s), "efficiency": float(s * s)}
            for i, s in enumerate(modes.singular_values)]
    (out_dir / "singular_values.csv").write_text(csv_text(["index", "singular_value", "efficiency"], rows))


# ---------------------------------------------------------------- subcommands

def cmd_susceptibility(args) -> int:
    params = EitParams(args.gamma_i, args.omega_c, args.delta_cap)
    rows = susceptibility_rows(_lineshape(args.lineshape, args.gamma_i), params, args.grid_points, args.span)
    _emit(csv_text(SUSCEPTIBILITY_COLUMNS, rows), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    mem = MemoryParams(args.d, args.tau_gamma, depth=args.depth)
    ctrl = ControlParams(args.theta, args.delay, args.ctrl_duration)
    ls = _lineshape(args.lineshape)
    freq = FrequencyGrid.uniform(args.classes)
    grid = SimGrid.auto(mem, ctrl, ls, nz=args.nz, freq=freq)
    if args.dt is not None:
        grid = SimGrid(grid.nz, args.dt, grid.t_min, grid.t_store, grid.t_out_min, grid.t_out_max, freq)
    for problem in grid.check(mem, ctrl, freq.span):
        log.warning("grid: %s", problem)
    run = run_memory(mem, ctrl, ls, grid, record=args.trace is not None)
    _emit(_json(run.summary()), args.out)
    if args.trace is not None:
        _emit(csv_text(TRACE_COLUMNS, _trace_rows(run)), args.trace)
    return EXIT_OK


def _trace_rows(run) -> list[dict]:
    rows = []
    for phase, state in (("storage", run.storage), ("retrieval", run.retrieval)):
        p2 = np.sum(np.abs(state.p_tot) ** 2, axis=1) * state.dz
        b2 = np.sum(np.abs(state.b_tot) ** 2, axis=1) * state.dz
        a2 = np.abs(state.a) ** 2
        a_in2 = np.abs(run.a_in) ** 2 if phase == "storage" else np.zeros_like(a2)
        for i, t in enumerate(state.times):
            rows.append({"phase": phase, "tau": float(t), "a_in2": float(a_in2[i]),
                         "a_trans2": float(a2[i]) if phase == "storage" else 0.0,
                         "a_out2": float(a2[i]) if phase == "retrieval" else 0.0,
                         "p_tot2": float(p2[i]), "b_tot2": float(b2[i])})
    return rows


def cmd_optimize(args) -> int:
    mem = MemoryParams(args.d, args.tau_gamma, depth=args.depth)
    constraint = PowerConstraint(args.max_power, args.power_convention)
    config = OptimizerConfig(restarts=args.restarts, seed=args.seed)
    res = optimize_control(mem, _lineshape(args.lineshape), constraint, config)
    _emit(csv_text(OPTIMIZE_COLUMNS, [res.row()]), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = ExperimentConfig.load(args.config)
    if config.experiment != "fig3_sweep":
        raise ConfigError("sweep takes a fig3_sweep experiment file; use `run` for the others")
    if args.output_dir:
        config.output_dir = args.output_dir
    manifest = run_experiment(config, resolve_jobs(args.jobs))
    sys.stdout.write((Path(config.output_dir) / "sweep.csv").read_text())
    return EXIT_NUMERICAL if manifest.failed else EXIT_OK


def cmd_afc(args) -> int:
    if args.finesse is not None and args.optimize:
        raise ConfigError("give either --finesse or --optimize")
    try:
        report = afc.afc_report(args.d, None if args.optimize or args.finesse is None else args.finesse)
    except ValueError as err:
        raise ConfigError(str(err)) from err
    _emit(_json(report), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    config = OptimizerConfig(restarts=args.restarts, seed=args.seed)
    rows = compare_eit_afc(args.d, args.tau_gamma, args.max_power, power_per_tau=args.power_per_tau,
                           convention=args.power_convention, config=config, jobs=resolve_jobs(args.jobs))
    _emit(csv_text(COMPARE_COLUMNS, rows), args.out)
    return EXIT_OK


def cmd_kernel(args) -> int:
    mem = MemoryParams(args.d, args.tau_gamma, depth=args.depth)
    ctrl = ControlParams(args.theta, args.delay, args.ctrl_duration)
    grid = kernel_grid(args.dt, args.nz)
    kernel = build_kernel(mem, ctrl, _lineshape(args.lineshape), grid, jobs=resolve_jobs(args.jobs))
    modes = svd_modes(kernel)
    _write_kernel(kernel, modes, Path(args.output_dir), {"mem": mem.__dict__, "ctrl": ctrl.__dict__})
    sys.stdout.write(_json({"optimal_efficiency": modes.optimal_efficiency,
                            "edge_ratio": kernel.edge_ratio(), "operator_norm": kernel.operator_norm()}))
    return EXIT_OK


def cmd_lineshape_opt(args) -> int:
    mem = MemoryParams(args.d, args.tau_gamma, depth=args.depth)
    ctrl = ControlParams(args.theta, args.delay, args.ctrl_duration)
    cfg = LadderConfig.fast() if args.fast else LadderConfig()
    overrides = {k: v for k, v in (("rungs", args.rungs), ("nodes", args.nodes), ("span", args.spline_span))
                 if v is not None}
    cfg = LadderConfig(**{**cfg.__dict__, **overrides})
    freq = cfg.grid().freq
    start = args.start if not args.start.startswith("random") or args.start[6:] else f"random{args.seed}"
    res = optimize_lineshape(mem, ctrl, _start_profile(start, freq, cfg.nodes, cfg.span), cfg, jobs=resolve_jobs(args.jobs))
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(csv_text(list(res.trace[0]), res.trace))
    res.lineshape.to_json(out / "lineshape.json")
    sys.stdout.write(_json({"final_efficiency": res.final_efficiency,
                            "rectangularity": rectangularity(res.lineshape, freq)}))
    return EXIT_OK


def cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    manifest = run_experiment(config, resolve_jobs(args.jobs))
    sys.stdout.write(_json({"manifest": str(Path(config.output_dir) / "manifest.json"),
                            "failed": [c["cell"] for c in manifest.failed]}))
    return EXIT_NUMERICAL if manifest.failed else EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _memory_args(p, tau_default=1.0):
    p.add_argument("--d", type=float, default=5.0, help="optical depth")
    p.add_argument("--tau-gamma", type=float, default=tau_default, help="tau_FWHM * gamma_i")
    p.add_argument("--depth", choices=["area", "peak"], default="area", help="optical-depth convention")


def _control_args(p):
    p.add_argument("--theta", type=float, default=2.738 * math.pi, help="control pulse area (rad)")
    p.add_argument("--delay", type=float, default=-0.245, help="control delay (tau_FWHM)")
    p.add_argument("--ctrl-duration", type=float, default=1.256, help="control FWHM (tau_FWHM)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lml", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("susceptibility", help="EIT susceptibility curve as CSV")
    p.add_argument("--lineshape", default="rectangular")
    p.add_argument("--gamma-i", type=float, default=50.0)
    p.add_argument("--omega-c", type=float, default=10.0)
    p.add_argument("--delta-cap", type=float, default=0.0)
    p.add_argument("--grid-points", type=int, default=4001)
    p.add_argument("--span", type=float, default=2.0, help="half range in units of gamma_i")
    p.add_argument("--out")
    p.set_defaults(func=cmd_susceptibility)

    p = sub.add_parser("simulate", help="one storage + retrieval run")
    _memory_args(p)
    p.add_argument("--lineshape", default="rectangular")
    _control_args(p)
    p.add_argument("--nz", type=int, default=50)
    p.add_argument("--dt", type=float)
    p.add_argument("--classes", type=int, default=501)
    p.add_argument("--trace", help="CSV path for time traces")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="optimize the control for one memory point")
    _memory_args(p)
    p.add_argument("--lineshape", default="rectangular")
    p.add_argument("--max-power", type=float, default=math.inf, help="max |Omega|^2 in gamma_i^2")
    p.add_argument("--power-convention", choices=["verbatim", "peak"], default="verbatim")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="fig3_sweep experiment file -> CSV")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("afc", help="analytic AFC efficiency")
    p.add_argument("--d", type=float, required=True)
    p.add_argument("--finesse", type=float)
    p.add_argument("--optimize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_afc)

    p = sub.add_parser("compare", help="constrained EIT against optimized AFC")
    p.add_argument("--d", type=float, default=5.0)
    p.add_argument("--tau-gamma", type=float, nargs="+", default=[4.0])
    p.add_argument("--max-power", type=float, nargs="+", default=[1.0, 8.0])
    p.add_argument("--power-per-tau", action="store_true", help="read --max-power in gamma_i / tau_FWHM")
    p.add_argument("--power-convention", choices=["verbatim", "peak"], default="verbatim")
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("kernel", help="storage-retrieval kernel and its SVD")
    _memory_args(p)
    p.add_argument("--lineshape", default="rectangular")
    _control_args(p)
    p.add_argument("--dt", type=float, default=0.025)
    p.add_argument("--nz", type=int, default=50)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output-dir", default="kernel")
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("lineshape-opt", help="interpolation-ladder lineshape optimization")
    _memory_args(p)
    _control_args(p)
    p.add_argument("--start", default="rectangular",
                   help="rectangular, quadratic+, quadratic-, random[N] or a lineshape JSON file")
    p.add_argument("--rungs", type=int)
    p.add_argument("--nodes", type=int)
    p.add_argument("--seed", type=int, default=0, help="seed for --start random")
    p.add_argument("--spline-span", type=float, help="spline nodes cover +-span (gamma_i); default 2.5")
    p.add_argument("--fast", action="store_true", help="7 rungs, 21 nodes, coarser grids")
    p.add_argument("--jobs", type=int)
    p.add_argument("--output-dir", default="lineshape_opt")
    p.set_defaults(func=cmd_lineshape_opt)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--output-dir")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as err:
        sys.stderr.write(f"lml: config error: {err}\n")
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        sys.stderr.write(f"lml: config error: {err}\n")
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as err:
        sys.stderr.write(f"lml: numerical failure: {err}\n")
        return EXIT_NUMERICAL
    except (InvalidLineshapeError, ValueError) as err:
        sys.stderr.write(f"lml: config error: {err}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
