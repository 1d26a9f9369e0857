"""Command line entry point: ``uavofdma {solve,baseline,sweep,validate}``.

Exit codes: 0 success, 2 invalid input, 3 solver failure. Failures also emit
a JSON error record on stderr (and ``error.json`` in the output directory).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bcd import BcdConfig, InfeasibleTour, solve_kind
from .io import (ScenarioError, atomic_write, bundle_to_text, canonical_json, load_bundle, load_scenario,
                 make_bundle, sample_trajectory, scenario_from_text, scenario_to_dict, verify_bundle,
                 write_trajectory_csv)
from .scenario import Scenario, Trajectory

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
KIND_CHOICES = ("proposed", "circular", "static", "fly-and-hover")
BASELINE_CHOICES = ("circular", "static", "fly-and-hover")

log = logging.getLogger("uavofdma")


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind, self.message = code, kind, message


def default_scenario_path() -> Path:
    return Path(str(resources.files("uavofdma") / "data" / "default.yaml"))


def parse_theta(text: str, num_users: int) -> np.ndarray:
    """``"0.4"`` for every user or ``"0,0.2,0.5,1"`` per user."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"--theta: cannot parse {text!r} as a number or comma-separated list") from None
    if len(values) == 1:
        values = values * num_users
    if len(values) != num_users:
        raise ScenarioError(f"--theta: expected 1 or {num_users} values, got {len(values)}")
    theta = np.array(values)
    if np.any(~np.isfinite(theta)) or np.any(theta < 0) or np.any(theta > 1):
        raise ScenarioError(f"--theta: MRR values must lie in [0, 1], got {values}")
    return theta


def parse_grid(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ScenarioError(f"--values: cannot parse {text!r}") from None


def _scenario(args) -> Scenario:
    path = Path(args.scenario) if args.scenario else default_scenario_path()
    scenario = load_scenario(path)
    changes = {}
    if args.period is not None:
        changes["period"] = args.period
    if args.slots is not None:
        changes["slots"] = args.slots
    if changes:
        try:
            scenario = scenario.with_uav(**changes)
        except ValueError as exc:
            raise ScenarioError(f"overrides: {exc}") from None
    return scenario


def _config(args) -> BcdConfig:
    try:
        return BcdConfig(l_max=args.l_max, epsilon=args.epsilon, max_outer_iterations=args.max_outer,
                         schedule=args.schedule, allocation_method=args.allocation_method, gap_tol=args.gap_tol)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _config_dict(config: BcdConfig) -> dict:
    d = asdict(config)
    d.pop("theta_targets", None)
    return d


def solve_cell(scenario: Scenario, kind: str, theta, config: BcdConfig, flags: dict) -> dict:
    """Run one solve and return its result bundle; shared by ``solve`` and ``sweep``."""
    report = solve_kind(scenario, kind, theta, config)
    return make_bundle(scenario, report, flags, __version__)


def _cell_flags(kind: str, theta, config: BcdConfig) -> dict:
    return {"trajectory": kind.replace("_", "-"), "theta": [float(t) for t in np.atleast_1d(theta)],
            "config": _config_dict(config)}


def _write_solve_outputs(out: Path, scenario: Scenario, bundle: dict, trajectory_kind: str,
                         sample_interval: float, plots: bool):
    atomic_write(out / "result.json", bundle_to_text(bundle))
    traj = Trajectory(np.array(bundle["trajectory_m"], dtype=float))
    samples = sample_trajectory(traj, scenario.uav.period, sample_interval)
    write_trajectory_csv(out / "trajectory.csv", samples)
    if plots:
        from .plotting import plot_trajectory

        plot_trajectory(out / "trajectory.png", scenario, traj,
                        f"{trajectory_kind}, eta = {bundle['eta']:.4f} bps/Hz")


def cmd_solve(args, kind=None) -> int:
    scenario = _scenario(args)
    kind = kind or args.trajectory
    theta = parse_theta(args.theta, scenario.num_users) if args.theta is not None else scenario.mrrs
    if args.sample_interval <= 0:
        raise ScenarioError("--sample-interval must be positive")
    config = _config(args)
    flags = _cell_flags(kind, theta, config)
    out = Path(args.out)
    bundle = _run_solver(lambda: solve_cell(scenario, kind.replace("-", "_"), theta, config, flags))
    if args.seedless:
        again = _run_solver(lambda: solve_cell(scenario, kind.replace("-", "_"), theta, config, flags))
        if again["determinism_hash"] != bundle["determinism_hash"]:
            raise CliError(EXIT_SOLVER, "NonDeterministic",
                           "two identical solves produced different result bundles")
    _write_solve_outputs(out, scenario, bundle, kind, args.sample_interval, not args.no_plots)
    print(json.dumps({"eta": bundle["eta"], "feasible": bundle["feasible"],
                      "termination": bundle["iterations"]["termination"], "out": str(out),
                      "determinism_hash": bundle["determinism_hash"]}))
    return EXIT_OK


def cmd_baseline(args) -> int:
    return cmd_solve(args, kind=args.kind)


def _run_solver(fn):
    try:
        return fn()
    except (ScenarioError, CliError):
        raise
    except InfeasibleTour as exc:
        raise CliError(EXIT_SOLVER, "InfeasibleTour", str(exc)) from None
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        raise CliError(EXIT_SOLVER, type(exc).__name__, str(exc)) from None


def _cell_job(payload):
    """Worker entry: returns ``(key, bundle or None, error or None)``."""
    key, sc_dict, kind, theta, cfg_dict, flags = payload
    scenario = scenario_from_text(yaml.safe_dump(sc_dict), "<cell>")
    config = BcdConfig(**cfg_dict)
    try:
        return key, solve_cell(scenario, kind, np.array(theta), config, flags), None
    except Exception as exc:  # recorded in-cell
        return key, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    base = _scenario(args)
    config = _config(args)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for k in kinds:
        if k not in KIND_CHOICES:
            raise ScenarioError(f"--kinds: unknown trajectory kind {k!r}; choose from {', '.join(KIND_CHOICES)}")
    grid = parse_grid(args.values)
    if not grid:
        raise ScenarioError("--values: empty grid")
    out = Path(args.out)
    cache = out / "cells"
    cells = []  # (row, kind, key, scenario, theta)
    for row, value in enumerate(grid):
        if args.param == "theta":
            theta = parse_theta(repr(value), base.num_users)
            scenario = base
        else:
            if args.theta is None:
                theta = base.mrrs
            else:
                theta = parse_theta(args.theta, base.num_users)
            if not value > 0:
                raise ScenarioError(f"--values: periods must be positive, got {value}")
            try:
                scenario = base.with_uav(period=value, slots=max(2, int(round(value / args.slot_time))))
            except ValueError as exc:
                raise ScenarioError(str(exc)) from None
        for kind in kinds:
            flags = _cell_flags(kind, theta, config)
            key_src = {"scenario": scenario_to_dict(scenario), "flags": flags, "version": __version__}
            key = hashlib.sha256(canonical_json(key_src).encode()).hexdigest()[:20]
            cells.append((row, kind, key, scenario, theta, flags))

    results = {}
    todo = []
    for row, kind, key, scenario, theta, flags in cells:
        path = cache / f"{key}.json"
        if path.exists():
            results[key] = json.loads(path.read_text())
        else:
            todo.append((key, scenario_to_dict(scenario), kind.replace("-", "_"), theta.tolist(),
                         _config_dict(config), flags))
    log.info("sweep: %d cells, %d cached, %d to run", len(cells), len(cells) - len(todo), len(todo))

    def record(key, bundle, error):
        entry = {"bundle": bundle, "error": error}
        atomic_write(cache / f"{key}.json", json.dumps(entry, sort_keys=True))
        results[key] = entry

    if args.jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            for key, bundle, error in pool.map(_cell_job, todo):
                record(key, bundle, error)
    else:
        for payload in todo:
            record(*_cell_job(payload))

    table = {k: [math.nan] * len(grid) for k in kinds}
    errors = []
    for row, kind, key, *_ in cells:
        entry = results[key]
        if entry["error"] is None:
            table[kind][row] = entry["bundle"]["eta"]
        else:
            errors.append({"row": row, "value": grid[row], "kind": kind, "error": entry["error"]})
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([args.param] + kinds)
    err_at = {(e["row"], e["kind"]): e["error"] for e in errors}
    for row, value in enumerate(grid):
        cells_out = []
        for kind in kinds:
            err = err_at.get((row, kind))
            cells_out.append(f"ERROR: {err}" if err else repr(float(table[kind][row])))
        writer.writerow([repr(value)] + cells_out)
    stem = f"sweep_{args.param}"
    atomic_write(out / f"{stem}.csv", buf.getvalue())
    atomic_write(out / f"{stem}.json", json.dumps({"parameter": args.param, "grid": grid, "kinds": kinds,
                                                   "eta": table, "errors": errors,
                                                   "cells": {f"{r},{k}": key for r, k, key, *_ in cells}},
                                                  indent=1, sort_keys=True, allow_nan=True) + "\n")
    if not args.no_plots:
        from .plotting import plot_sweep

        plot_sweep(out / f"{stem}.png", "theta" if args.param == "theta" else "period_s", grid, table)
    print(json.dumps({"rows": len(grid), "columns": len(kinds), "failed_cells": len(errors),
                      "table": str(out / f"{stem}.csv")}))
    return EXIT_OK


def cmd_validate(args) -> int:
    path = Path(args.path)
    if path.suffix.lower() == ".json":
        try:
            bundle = load_bundle(path)
            check = verify_bundle(bundle)
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"{path}: not a readable result bundle: {exc}") from None
        print(json.dumps(check, indent=1))
        if not (check["eta_match"] and check["feasible"] and check["hash_match"]):
            raise CliError(EXIT_INVALID, "BundleMismatch", f"{path}: stored result does not re-verify")
        return EXIT_OK
    scenario = load_scenario(path)
    print(json.dumps({"path": str(path), "users": scenario.num_users, "slots": scenario.num_slots,
                      "period_s": scenario.uav.period, "s_max_m": scenario.uav.s_max, "valid": True}))
    return EXIT_OK


def _add_common(p):
    p.add_argument("scenario", nargs="?", help="scenario YAML (default: packaged four-user scenario)")
    p.add_argument("--theta", help="MRR: a scalar for all users or a comma-separated per-user list")
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    p.add_argument("--period", type=float, help="override the flight period in seconds")
    p.add_argument("--slots", type=int, help="override the number of slots")
    p.add_argument("--l-max", type=int, default=10, help="MRR annealing steps (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=1e-3, help="outer-loop stopping tolerance")
    p.add_argument("--max-outer", type=int, default=60, help="outer iteration cap")
    p.add_argument("--schedule", choices=("literal", "constant"), default="literal")
    p.add_argument("--allocation-method", choices=("auto", "ellipsoid", "interior"), default="auto")
    p.add_argument("--gap-tol", type=float, default=1e-6, help="relative duality gap of allocation solves")
    p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavofdma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario and write a result bundle")
    _add_common(p)
    p.add_argument("--trajectory", choices=KIND_CHOICES, default="proposed")
    p.add_argument("--sample-interval", type=float, default=4.0, help="CSV sampling step in seconds")
    p.add_argument("--seedless", action="store_true", help="solve twice and fail unless the bundles match")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("baseline", help="allocation-only solve on a reference trajectory")
    _add_common(p)
    p.add_argument("--kind", choices=BASELINE_CHOICES, required=True)
    p.add_argument("--sample-interval", type=float, default=4.0)
    p.add_argument("--seedless", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", help="throughput table over an MRR or period grid")
    _add_common(p)
    p.add_argument("--param", choices=("theta", "period"), default="theta")
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--kinds", default=",".join(KIND_CHOICES), help="comma-separated trajectory kinds")
    p.add_argument("--slot-time", type=float, default=2.7, help="seconds per slot in period sweeps")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default: %(default)s)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a scenario file or re-verify a result bundle")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)
    return parser


def _emit_error(code: int, kind: str, message: str, out_dir) -> int:
    record = {"error": kind, "message": message, "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    if out_dir is not None:
        try:
            atomic_write(Path(out_dir) / "error.json", json.dumps(record, indent=1) + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out_dir = getattr(args, "out", None)
    try:
        return args.func(args)
    except ScenarioError as exc:
        return _emit_error(EXIT_INVALID, "ValidationError", str(exc), out_dir)
    except CliError as exc:
        return _emit_error(exc.code, exc.kind, exc.message, out_dir)


if __name__ == "__main__":
    sys.exit(main())
