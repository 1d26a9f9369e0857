"""Scenario files, result bundles and trajectory exports.

Scenario files are YAML with unit-suffixed keys::

    uav:
      altitude_m: 500.0
      v_max_mps: 50.0
      p_max_w: 0.1
      period_s: 270.0
      slots: 540
      bandwidth_hz: 10000000.0
      noise_psd_dbm_per_hz: -169.0
      ref_gain_db: -50.0
    users:
      - position_m: [-400.0, -400.0]
        mrr: 0.0

Every ``uav`` key and every user key is required; unknown keys are rejected.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .scenario import (Allocation, Scenario, Trajectory, UavParams, UserSpec, achievable_eta, average_throughputs,
                       rate_matrix)

# file key -> UavParams field
UAV_KEYS = {
    "altitude_m": "altitude",
    "v_max_mps": "v_max",
    "p_max_w": "p_max",
    "period_s": "period",
    "slots": "slots",
    "bandwidth_hz": "bandwidth",
    "noise_psd_dbm_per_hz": "noise_psd",
    "ref_gain_db": "ref_gain_db",
}
USER_KEYS = ("position_m", "mrr")
TIMING_KEYS = ("timing",)


class ScenarioError(ValueError):
    """Scenario file could not be parsed or fails validation."""


class _LineLoader(yaml.SafeLoader):
    """Safe loader that remembers the line of every mapping key."""


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=True)
    lines = {}
    for key_node, _ in node.value:
        lines[loader.construct_object(key_node)] = key_node.start_mark.line + 1
    mapping["__lines__"] = lines
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _where(source: str, mapping: dict, key: Optional[str] = None) -> str:
    line = mapping.get("__lines__", {}).get(key) if key is not None else None
    line = line or mapping.get("__line__")
    return f"{source}:{line}" if line else source


def _check_keys(mapping: dict, allowed, required, context: str, source: str):
    keys = [k for k in mapping if not str(k).startswith("__")]
    unknown = [k for k in keys if k not in allowed]
    if unknown:
        raise ScenarioError(f"{_where(source, mapping, unknown[0])}: unknown key {unknown[0]!r} in {context} "
                            f"(allowed: {', '.join(allowed)})")
    missing = [k for k in required if k not in mapping]
    if missing:
        raise ScenarioError(f"{_where(source, mapping)}: {context} is missing required key {missing[0]!r}")


def _number(mapping: dict, key: str, context: str, source: str) -> float:
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{_where(source, mapping, key)}: {context}.{key} must be a number, got {value!r}")
    return value


def scenario_from_text(text: str, source: str = "<string>") -> Scenario:
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ScenarioError(f"{where}: YAML parse error: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be a mapping with 'uav' and 'users'")
    _check_keys(data, ("uav", "users"), ("uav", "users"), "scenario", source)
    uav = data["uav"]
    if not isinstance(uav, dict):
        raise ScenarioError(f"{_where(source, data, 'uav')}: 'uav' must be a mapping")
    _check_keys(uav, tuple(UAV_KEYS), tuple(UAV_KEYS), "uav", source)
    params = {}
    for key, name in UAV_KEYS.items():
        value = _number(uav, key, "uav", source)
        if key == "slots" and (not float(value).is_integer()):
            raise ScenarioError(f"{_where(source, uav, key)}: uav.slots must be an integer, got {value!r}")
        params[name] = int(value) if key == "slots" else float(value)
    try:
        params = UavParams(**params)
    except ValueError as exc:
        raise ScenarioError(f"{_where(source, uav)}: invalid uav parameters: {exc}") from None
    users_raw = data["users"]
    if not isinstance(users_raw, list) or not users_raw:
        raise ScenarioError(f"{_where(source, data, 'users')}: 'users' must be a non-empty list")
    users = []
    for i, entry in enumerate(users_raw):
        ctx = f"users[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{_where(source, data, 'users')}: {ctx} must be a mapping")
        _check_keys(entry, USER_KEYS, USER_KEYS, ctx, source)
        pos = entry["position_m"]
        if not isinstance(pos, list) or len(pos) != 2 or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) for v in pos):
            raise ScenarioError(f"{_where(source, entry, 'position_m')}: {ctx}.position_m must be [x, y] in meters")
        mrr = _number(entry, "mrr", ctx, source)
        try:
            users.append(UserSpec((float(pos[0]), float(pos[1])), float(mrr)))
        except ValueError as exc:
            raise ScenarioError(f"{_where(source, entry, 'mrr')}: {ctx}: {exc}") from None
    return Scenario(tuple(users), params)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file: {exc.strerror}") from None
    return scenario_from_text(text, str(path))


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    uav = {key: getattr(scenario.uav, name) for key, name in UAV_KEYS.items()}
    users = [{"position_m": [float(u.position[0]), float(u.position[1])], "mrr": float(u.mrr)}
             for u in scenario.users]
    return {"uav": uav, "users": users}


def scenario_to_text(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_scenario(scenario: Scenario, path) -> None:
    atomic_write(path, scenario_to_text(scenario))


# -- result bundles ---------------------------------------------------------------

def _clean(value):
    """JSON-ready copy: arrays to lists, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"))


def determinism_hash(bundle: dict) -> str:
    body = {k: v for k, v in bundle.items() if k not in TIMING_KEYS and k != "determinism_hash"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def make_bundle(scenario: Scenario, report, flags: dict, version: str) -> dict:
    traj, alloc = report.trajectory, report.allocation
    rates = rate_matrix(scenario, traj, alloc)
    sol = report.allocation_solution
    bundle = {
        "tool": {"name": "uavofdma", "version": version},
        "config": {"scenario": scenario_to_dict(scenario), "flags": flags},
        "eta": report.eta,
        "theta": report.theta,
        "throughputs": average_throughputs(scenario, traj, alloc),
        "trajectory_m": traj.waypoints,
        "bandwidth": alloc.bandwidth,
        "power_w": alloc.power,
        "rates": rates,
        "iterations": {"eta": report.eta_history, "theta_temp": report.theta_temp_history,
                       "termination": report.termination, "notes": report.notes},
        "kkt": {k: v for k, v in (sol.kkt_report if sol else {}).items()},
        "dual_bound": sol.dual_bound if sol else None,
        "feasible": bool(report.feasibility.feasible) if report.feasibility is not None else None,
        "timing": {"elapsed_s": report.elapsed},
    }
    bundle = _clean(bundle)
    bundle["determinism_hash"] = determinism_hash(bundle)
    return bundle


def bundle_to_text(bundle: dict) -> str:
    return json.dumps(bundle, indent=1, sort_keys=True) + "\n"


def load_bundle(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def verify_bundle(bundle: dict, tol: float = 1e-9) -> dict:
    """Recompute eta and feasibility from a bundle's stored arrays."""
    from .scenario import check_feasibility

    sc_dict = bundle["config"]["scenario"]
    scenario = scenario_from_text(yaml.safe_dump(sc_dict), "<bundle>")
    traj = Trajectory(np.array(bundle["trajectory_m"], dtype=float))
    alloc = Allocation(np.array(bundle["bandwidth"], dtype=float), np.array(bundle["power_w"], dtype=float))
    theta = np.array(bundle["theta"], dtype=float)
    eta = achievable_eta(rate_matrix(scenario, traj, alloc), theta)
    report = check_feasibility(scenario, traj, alloc, bundle["eta"], theta)
    return {"eta_stored": bundle["eta"], "eta_recomputed": eta,
            "eta_match": abs(eta - bundle["eta"]) <= tol * max(1.0, abs(eta)),
            "feasible": report.feasible, "violations": [str(v) for v in report.violations],
            "hash_match": determinism_hash(bundle) == bundle.get("determinism_hash")}


def sample_trajectory(trajectory: Trajectory, period: float, interval: float) -> np.ndarray:
    """Positions every ``interval`` seconds over ``[0, period]``.

    The closed waypoint sequence is spread uniformly over the period, so
    there are ``floor(period / interval) + 1`` rows of ``(t, x, y)``.
    """
    if not interval > 0:
        raise ValueError("sample interval must be positive")
    q = trajectory.waypoints
    n = len(q)
    t_way = np.linspace(0.0, period, n)
    count = int(math.floor(period / interval + 1e-9)) + 1
    t = np.arange(count) * interval
    return np.column_stack([t, np.interp(t, t_way, q[:, 0]), np.interp(t, t_way, q[:, 1])])


def write_trajectory_csv(path, samples: np.ndarray) -> None:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t_seconds", "x_m", "y_m"])
    for t, x, y in samples:
        writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])
    atomic_write(path, buf.getvalue())
