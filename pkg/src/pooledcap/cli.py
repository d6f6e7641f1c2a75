"""Command-line entry point: ``pooledcap gen|solve|benchmark|sweep|stats``.

Every CSV is written atomically next to a ``<name>.meta.json`` sidecar that
holds the config hash, a version string and wall times.  Timing lives only
in the sidecars, so CSVs are reproducible bit for bit from config and seeds.
Failures print one JSON object on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .benders import BendersOptions
from .instances import (GenSpec, INSTANCE_SIZES, InstanceError, build_instance, load_genspec,
                        load_instance, save_instance)
from .model import ValidationError, derive_arc_sets, scale_costs
from .rolling import (RollingHorizonError, _atomic_csv, _atomic_text, compute_savings, percent,
                      relocation_lower_bound, run_rolling_horizon, static_benchmark)

OUT_ENV = "POOLEDCAP_OUT"
DEFAULT_OUT = "pooledcap-out"
SUBCOMMANDS = ("gen", "solve", "benchmark", "sweep", "stats")

BENCHMARK_COLUMNS = ["instance", "seed", "static_cost", "capacity", "relocation_lower_bound",
                     "potential_savings_pct"]
SWEEP_COLUMNS = ["instance", "seed", "pooling_km", "lookahead", "case", "holding_scale",
                 "relocation_scale", "total_cost", "static_cost", "capacity", "static_capacity",
                 "relocations", "relocation_share_pct", "cost_savings_pct",
                 "capacity_savings_pct", "rider_travel_km", "courier_travel_km", "certified"]
STATS_COLUMNS = ["scenarios", "repetitions", "mean_cost", "std_cost", "cv_pct", "stat_gap_pct"]
SAMPLE_COLUMNS = ["scenarios", "repetition", "scenario_seed", "total_cost", "capacity"]


class CLIError(Exception):
    """Bad usage or configuration; reported as JSON with exit code 2."""


@dataclass
class RunConfig:
    """Resolved settings of one CLI invocation."""

    subcommand: str
    instance: Optional[str] = None
    spec: Optional[str] = None          # GenSpec file or instance label A-E
    gen: dict = field(default_factory=dict)   # GenSpec field overrides
    pooling_km: Optional[list] = None
    lookahead: list = field(default_factory=lambda: [1])
    epsilon: Optional[float] = None
    seeds: list = field(default_factory=lambda: [0])
    scenarios: Optional[int] = None
    out: str = DEFAULT_OUT
    pareto: bool = True
    epsilon_method: bool = True
    holding_scale: list = field(default_factory=lambda: [1.0])
    relocation_scale: list = field(default_factory=lambda: [1.0])
    scenario_counts: list = field(default_factory=lambda: [5, 20, 100])
    repetitions: int = 10
    max_iter: int = 200
    time_limit: Optional[float] = None    # seconds per sub-horizon; results then depend on timing
    jobs: int = 1

    def __post_init__(self):
        errs = []
        if self.subcommand not in SUBCOMMANDS:
            errs.append(f"unknown subcommand {self.subcommand!r}")
        if not self.seeds:
            errs.append("at least one seed is required")
        if self.scenarios is not None and self.scenarios < 1:
            errs.append("scenarios must be >= 1")
        if any(c < 1 for c in self.scenario_counts):
            errs.append("scenario counts must be >= 1")
        if self.repetitions < 1 or self.jobs < 1 or self.max_iter < 1:
            errs.append("repetitions, jobs and max_iter must be >= 1")
        if any(t < 0 for t in self.lookahead) or not self.lookahead:
            errs.append("lookahead values must be >= 0")
        if self.pooling_km is not None and any(d < 0 for d in self.pooling_km):
            errs.append("pooling distances must be >= 0")
        if self.time_limit is not None and not self.time_limit > 0:
            errs.append("time limit must be > 0")
        if self.epsilon is not None and not self.epsilon > 0:
            errs.append("epsilon must be > 0")
        if any(not s > 0 for s in list(self.holding_scale) + list(self.relocation_scale)):
            errs.append("cost scalings must be > 0")
        if (self.instance is None) == (self.spec is None):
            errs.append("exactly one of --instance and --spec is required")
        if self.instance is not None and self.subcommand in ("gen", "stats"):
            errs.append(f"{self.subcommand} generates instances and needs --spec")
        if self.instance is not None and self.scenarios is not None:
            errs.append("--scenarios resamples demand and needs --spec")
        if errs:
            raise CLIError("; ".join(errs))

    def digest(self) -> str:
        """Hash of everything that changes results (not output path or parallelism)."""
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def options(self) -> BendersOptions:
        return BendersOptions(pareto=self.pareto, epsilon_method=self.epsilon_method,
                              epsilon=self.epsilon, max_iter=self.max_iter,
                              time_limit=self.time_limit)


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


# ------------------------------------------------------------------ parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults stay None so config values can fill unset flags
    p.add_argument("--config", help="JSON file with RunConfig fields; flags win")
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--spec", help="GenSpec JSON file or instance label (A-E)")
    p.add_argument("--gen", action="append", metavar="KEY=VALUE",
                   help="GenSpec override, VALUE parsed as JSON (repeatable)")
    p.add_argument("--pooling-km", dest="pooling_km", type=float, nargs="+")
    p.add_argument("--lookahead", type=int, nargs="+")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--seed", dest="seeds", type=int, nargs="+")
    p.add_argument("--scenarios", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--no-pareto", dest="pareto", action="store_const", const=False)
    p.add_argument("--no-epsilon-method", dest="epsilon_method", action="store_const",
                   const=False)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--time-limit", dest="time_limit", type=float,
                   help="seconds per Benders sub-horizon (output then depends on timing)")
    p.add_argument("--holding-scale", dest="holding_scale", type=float, nargs="+")
    p.add_argument("--relocation-scale", dest="relocation_scale", type=float, nargs="+")
    p.add_argument("--scenario-counts", dest="scenario_counts", type=int, nargs="+")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pooledcap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pooledcap {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    helps = {"gen": "write instance files", "solve": "rolling-horizon solve",
             "benchmark": "static benchmark and relocation lower bound",
             "sweep": "pooling x lookahead x cost-scaling grid",
             "stats": "cost variation over resampled scenario sets"}
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name, help=helps[name]))
    return parser


def _parse_gen(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise CLIError(f"--gen expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _read_config(path) -> dict:
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CLIError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise CLIError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)} - {"subcommand"}
    unknown = set(d) - known
    if unknown:
        raise CLIError(f"{path}: unknown config key(s) {sorted(unknown)}")
    return d


def resolve_config(argv, env=None) -> RunConfig:
    """Flags, then config file, then environment, then defaults."""
    env = os.environ if env is None else env
    ns = build_parser().parse_args(argv)
    if ns.subcommand is None:
        raise CLIError("a subcommand is required: " + ", ".join(SUBCOMMANDS))
    flags = vars(ns)
    flags["gen"] = _parse_gen(flags["gen"]) if flags["gen"] else None
    cfg_path = flags.pop("config")
    cfg = _read_config(cfg_path) if cfg_path else {}
    if "out" not in cfg and env.get(OUT_ENV):
        cfg["out"] = env[OUT_ENV]
    merged = {}
    for f in fields(RunConfig):
        if flags.get(f.name) is not None:
            merged[f.name] = flags[f.name]
        elif f.name in cfg:
            merged[f.name] = cfg[f.name]
    if flags.get("gen") and "gen" in cfg:
        merged["gen"] = {**cfg["gen"], **flags["gen"]}
    # relative paths inside a config file are relative to that file
    for key in ("instance", "spec"):
        val = cfg.get(key)
        if (cfg_path and flags.get(key) is None and val and val not in INSTANCE_SIZES
                and not Path(val).is_absolute()):
            merged[key] = str(Path(cfg_path).parent / val)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise CLIError(str(exc)) from exc


# ----------------------------------------------------------------- problems

def base_spec(cfg: RunConfig) -> GenSpec:
    if cfg.spec in INSTANCE_SIZES:
        spec = GenSpec(label=cfg.spec)
    else:
        spec = load_genspec(cfg.spec)
    try:
        return replace(spec, **cfg.gen) if cfg.gen else spec
    except TypeError as exc:
        raise CLIError(f"--gen: {exc}") from exc


def instance_name(cfg: RunConfig) -> str:
    if cfg.instance is not None:
        return Path(cfg.instance).stem
    return cfg.spec if cfg.spec in INSTANCE_SIZES else Path(cfg.spec).stem


def load_problem(cfg: RunConfig, seed: int, pooling: Optional[float] = None,
                 scenarios: Optional[int] = None, scenario_seed: Optional[int] = None):
    """``(net, params, scen)`` for one seed; ``pooling`` re-derives the pooling arcs."""
    if cfg.instance is not None:
        net, params, scen = load_instance(cfg.instance)
        if pooling is not None:
            net = derive_arc_sets(net, pooling)
        return net, params, scen
    spec = replace(base_spec(cfg), seed=seed)
    n = scenarios if scenarios is not None else cfg.scenarios
    if n is not None:
        spec = replace(spec, n_scenarios=n)
    if pooling is not None:
        spec = replace(spec, pooling_distance=pooling)
    if scenario_seed is not None:
        spec = replace(spec, scenario_seed=scenario_seed)
    return build_instance(spec)


def run_seeds(cfg: RunConfig) -> list:
    """Seeds to loop over; an instance file is fixed, so it runs once."""
    return [None] if cfg.instance is not None else list(cfg.seeds)


def run_tag(cfg: RunConfig, seed) -> str:
    return instance_name(cfg) if seed is None else f"{instance_name(cfg)}_s{seed}"


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(round(float(x), 6))
    return str(x)


def write_table(path: Path, columns, rows, cfg: RunConfig, wall: dict) -> None:
    _atomic_csv(path, columns, [[_fmt(r[c]) for c in columns] for r in rows])
    meta = {"file": path.name, "config_hash": cfg.digest(), "version": version_string(),
            "config": asdict(cfg), "wall_times": wall}
    _atomic_text(path.with_name(path.stem + ".meta.json"), json.dumps(meta, indent=2, default=str))


# ----------------------------------------------------------------- commands

def cmd_gen(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    written = []
    for seed in cfg.seeds:
        for d in cfg.pooling_km or [None]:
            net, params, scen = load_problem(cfg, seed, d)
            tag = f"_d{d:g}" if d is not None else ""
            path = out / f"{instance_name(cfg)}_s{seed}{tag}.json"
            save_instance(path, net, params, scen)
            written.append(str(path))
    return {"written": written}


def cmd_solve(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    d = cfg.pooling_km[0] if cfg.pooling_km else None
    written = []
    for seed in run_seeds(cfg):
        net, params, scen = load_problem(cfg, seed, d)
        for theta in cfg.lookahead:
            tag = f"{run_tag(cfg, seed)}_th{theta}"
            start = time.perf_counter()
            try:
                res = run_rolling_horizon(net, params, scen, theta, options=cfg.options(),
                                          log_dir=out / "benders" / tag)
            except RollingHorizonError as exc:
                exc.partial.write_json(out / f"{tag}.partial.json")
                raise
            bench = static_benchmark(net, params, scen)
            cost, cap = compute_savings(res, bench)
            write_table(out / f"{tag}.csv", list(res.rows()[0]) if res.n_periods else [],
                        res.rows(), cfg, {"total": time.perf_counter() - start,
                                          "periods": res.wall_times})
            summary = res.to_dict()
            summary.update({"static_cost": bench.cost, "static_capacity": bench.modules,
                            "cost_savings_pct": percent(cost), "capacity_savings_pct": percent(cap)})
            _atomic_text(out / f"{tag}.json", json.dumps(summary, indent=2))
            written.append(str(out / f"{tag}.csv"))
    return {"written": written}


def cmd_benchmark(cfg: RunConfig) -> dict:
    start = time.perf_counter()
    rows = []
    for seed in run_seeds(cfg):
        net, params, scen = load_problem(cfg, seed)
        bench = static_benchmark(net, params, scen)
        lb = relocation_lower_bound(net, params, scen)
        rows.append({"instance": instance_name(cfg), "seed": seed, "static_cost": bench.cost,
                     "capacity": bench.modules, "relocation_lower_bound": lb,
                     "potential_savings_pct": percent(1.0 - lb / bench.cost) if bench.cost else 0.0})
    path = Path(cfg.out) / "benchmark.csv"
    write_table(path, BENCHMARK_COLUMNS, rows, cfg, {"total": time.perf_counter() - start})
    return {"written": [str(path)]}


def case_label(h: float, r: float) -> str:
    names = {2.0: "High", 0.5: "Low", 1.0: "Base"}
    return f"{names.get(h, f'{h:g}x')}-{names.get(r, f'{r:g}x').lower()}"


def _sweep_cell(cfg: RunConfig, key: tuple, cell_path: str) -> dict:
    seed, d, theta, hs, rs = key
    net, params, scen = load_problem(cfg, seed, d)
    net = scale_costs(net, hs, rs)
    start = time.perf_counter()
    res = run_rolling_horizon(net, params, scen, theta, options=cfg.options())
    bench = static_benchmark(net, params, scen)
    cost, cap = compute_savings(res, bench)
    row = {"instance": instance_name(cfg), "seed": seed, "pooling_km": d, "lookahead": theta,
           "case": case_label(hs, rs), "holding_scale": hs, "relocation_scale": rs,
           "total_cost": res.total_cost, "static_cost": bench.cost, "capacity": res.capacity,
           "static_capacity": bench.modules, "relocations": int(res.R.sum()),
           "relocation_share_pct": percent(res.relocation_share),
           "cost_savings_pct": percent(cost), "capacity_savings_pct": percent(cap),
           "rider_travel_km": float(res.rider_travel.mean()),
           "courier_travel_km": float(res.courier_travel.mean()),
           "certified": all(res.certified)}
    record = {"config_hash": cfg.digest(), "row": row, "wall_time": time.perf_counter() - start}
    _atomic_text(Path(cell_path), json.dumps(record, indent=2))
    return record


def cmd_sweep(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    distances = cfg.pooling_km if cfg.pooling_km is not None else [None]
    keys = [(s, d, th, hs, rs) for s in run_seeds(cfg) for d in distances for th in cfg.lookahead
            for hs in cfg.holding_scale for rs in cfg.relocation_scale]
    start = time.perf_counter()
    records, todo = {}, []
    for key in keys:
        s, d, th, hs, rs = key
        path = out / "cells" / f"s{'file' if s is None else s}_d{'file' if d is None else f'{d:g}'}_th{th}_h{hs:g}_r{rs:g}.json"
        if path.exists():
            # completed cells of an identical config are reused
            try:
                rec = json.loads(path.read_text())
                if rec.get("config_hash") == cfg.digest():
                    records[key] = rec
                    continue
            except (OSError, json.JSONDecodeError):
                pass
        todo.append((key, str(path)))
    if cfg.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = {key: pool.submit(_sweep_cell, cfg, key, p) for key, p in todo}
            for key, fut in futures.items():
                records[key] = fut.result()
    else:
        for key, p in todo:
            records[key] = _sweep_cell(cfg, key, p)
    rows = [records[k]["row"] for k in keys]
    path = out / "sweep.csv"
    write_table(path, SWEEP_COLUMNS, rows, cfg,
                {"total": time.perf_counter() - start,
                 "cells": {f"{k}": records[k]["wall_time"] for k in keys}})
    return {"written": [str(path)], "cells": len(keys), "reused": len(keys) - len(todo)}


def scenario_seed(seed: int, rep: int) -> int:
    return 1_000_003 * (rep + 1) + seed


def cmd_stats(cfg: RunConfig) -> dict:
    start = time.perf_counter()
    seed = cfg.seeds[0]
    theta = cfg.lookahead[0]
    d = cfg.pooling_km[0] if cfg.pooling_km else None
    rows, samples = [], []
    for n in cfg.scenario_counts:
        costs = []
        for rep in range(cfg.repetitions):
            ss = scenario_seed(seed, rep)
            net, params, scen = load_problem(cfg, seed, d, scenarios=n, scenario_seed=ss)
            res = run_rolling_horizon(net, params, scen, theta, options=cfg.options())
            costs.append(res.total_cost)
            samples.append({"scenarios": n, "repetition": rep, "scenario_seed": ss,
                            "total_cost": res.total_cost, "capacity": res.capacity})
        c = np.asarray(costs)
        mean = float(c.mean())
        rows.append({"scenarios": n, "repetitions": cfg.repetitions, "mean_cost": mean,
                     "std_cost": float(c.std()),
                     "cv_pct": percent(c.std() / mean) if mean else 0.0,
                     "stat_gap_pct": percent((c.max() - c.min()) / c.min()) if c.min() else 0.0})
    out = Path(cfg.out)
    wall = {"total": time.perf_counter() - start}
    write_table(out / "stats.csv", STATS_COLUMNS, rows, cfg, wall)
    write_table(out / "stats_samples.csv", SAMPLE_COLUMNS, samples, cfg, wall)
    return {"written": [str(out / "stats.csv"), str(out / "stats_samples.csv")]}


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "benchmark": cmd_benchmark,
            "sweep": cmd_sweep, "stats": cmd_stats}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except CLIError as exc:
        return _fail("usage", str(exc), 2)
    except SystemExit as exc:           # --help / --version
        return int(exc.code or 0)
    try:
        summary = COMMANDS[cfg.subcommand](cfg)
    except CLIError as exc:
        return _fail("usage", str(exc), 2)
    except (InstanceError, ValidationError) as exc:
        return _fail("invalid_input", str(exc), 3)
    except RollingHorizonError as exc:
        return _fail("solve_failed", str(exc), 4)
    except Exception as exc:  # noqa: BLE001 - every failure must surface as JSON
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
