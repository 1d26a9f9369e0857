import csv
import json
import math

import numpy as np
import pytest

from helpers import square_scenario
from uavofdma.cli import default_scenario_path, main, parse_theta
from uavofdma.io import (ScenarioError, bundle_to_text, determinism_hash, load_bundle, load_scenario,
                         sample_trajectory, save_scenario, scenario_from_text, scenario_to_text, verify_bundle)
from uavofdma.scenario import Trajectory

SMALL = """\
uav:
  altitude_m: 500.0
  v_max_mps: 50.0
  p_max_w: 0.1
  period_s: 32.4
  slots: 12
  bandwidth_hz: 10000000.0
  noise_psd_dbm_per_hz: -169.0
  ref_gain_db: -50.0
users:
  - position_m: [-400.0, -400.0]
    mrr: 0.0
  - position_m: [400.0, -400.0]
    mrr: 0.0
  - position_m: [400.0, 400.0]
    mrr: 0.0
  - position_m: [-400.0, 400.0]
    mrr: 0.0
"""


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return path


# -- scenario files ---------------------------------------------------------------------

def test_default_scenario_loads():
    sc = load_scenario(default_scenario_path())
    assert sc.num_users == 4 and sc.num_slots == 540
    uav = sc.uav
    assert (uav.altitude, uav.v_max, uav.p_max, uav.period) == (500.0, 50.0, 0.1, 270.0)
    assert (uav.bandwidth, uav.noise_psd, uav.ref_gain_db) == (1e7, -169.0, -50.0)
    np.testing.assert_allclose(np.abs(sc.positions), 400.0)


def test_missing_altitude_is_named():
    text = SMALL.replace("  altitude_m: 500.0\n", "")
    with pytest.raises(ScenarioError, match="altitude"):
        scenario_from_text(text, "s.yaml")


def test_out_of_range_mrr_reports_its_line():
    text = SMALL.replace("mrr: 0.0", "mrr: 1.2", 1)
    with pytest.raises(ScenarioError, match=r"s\.yaml:12: .*mrr"):
        scenario_from_text(text, "s.yaml")


@pytest.mark.parametrize("edit,pattern", [
    (("  slots: 12\n", "  slots: 12\n  colour: red\n"), "unknown key 'colour'"),
    (("slots: 12", "slots: 12.5"), "integer"),
    (("period_s: 32.4", "period_s: fast"), "number"),
    (("[-400.0, -400.0]", "[-400.0]"), "position_m"),
    (("users:", "users: [\n"), "parse error"),
])
def test_invalid_files(edit, pattern):
    with pytest.raises(ScenarioError, match=pattern):
        scenario_from_text(SMALL.replace(*edit, 1), "s.yaml")


def test_round_trip_is_bit_exact(tmp_path):
    sc = square_scenario(slots=7, period=1.0 / 3.0, theta=(0.1, 0.2, 1.0 / 7.0, 0.0))
    save_scenario(sc, tmp_path / "a.yaml")
    again = load_scenario(tmp_path / "a.yaml")
    assert scenario_to_text(again) == scenario_to_text(sc)
    assert again.uav == sc.uav and again.users == sc.users


def test_sampling_counts_rows():
    traj = Trajectory(np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 0.0]]))
    s = sample_trajectory(traj, 270.0, 4.0)
    assert len(s) == math.floor(270 / 4) + 1
    np.testing.assert_allclose(s[0], [0.0, 0.0, 0.0])
    np.testing.assert_allclose(s[-1, 0], 268.0)
    with pytest.raises(ValueError):
        sample_trajectory(traj, 10.0, 0.0)


def test_theta_flag_parsing():
    np.testing.assert_array_equal(parse_theta("0.4", 3), [0.4, 0.4, 0.4])
    np.testing.assert_array_equal(parse_theta("0,0.5", 2), [0.0, 0.5])
    for bad in ("1.3", "0,0.5", "x"):
        with pytest.raises(ScenarioError):
            parse_theta(bad, 3)


# -- CLI ----------------------------------------------------------------------------------

def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_solve_static_writes_bundle_csv_and_plot(small_file, tmp_path, capsys):
    out = tmp_path / "out"
    code, stdout, _ = run(["solve", small_file, "--trajectory", "static", "--out", out, "--sample-interval", 4],
                          capsys)
    assert code == 0
    summary = json.loads(stdout)
    bundle = load_bundle(out / "result.json")
    assert bundle["iterations"]["termination"] == "allocation_only"
    assert summary["eta"] == bundle["eta"]
    np.testing.assert_allclose(bundle["trajectory_m"], 0.0, atol=1e-12)
    with open(out / "trajectory.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t_seconds", "x_m", "y_m"]
    assert len(rows) - 1 == math.floor(32.4 / 4) + 1
    assert (out / "trajectory.png").stat().st_size > 0
    check = verify_bundle(bundle)
    assert check["eta_match"] and check["feasible"] and check["hash_match"]
    assert bundle["determinism_hash"] == determinism_hash(bundle)
    assert (run(["validate", out / "result.json"], capsys))[0] == 0


def test_validate_detects_a_tampered_bundle(small_file, tmp_path, capsys):
    out = tmp_path / "out"
    run(["solve", small_file, "--trajectory", "static", "--out", out, "--no-plots"], capsys)
    bundle = load_bundle(out / "result.json")
    bundle["eta"] *= 1.01
    (tmp_path / "bad.json").write_text(bundle_to_text(bundle))
    code, _, err = run(["validate", tmp_path / "bad.json"], capsys)
    assert code == 2 and json.loads(err)["error"] == "BundleMismatch"


def test_validate_scenario_file(small_file, capsys):
    code, stdout, _ = run(["validate", small_file], capsys)
    assert code == 0 and json.loads(stdout)["users"] == 4


def test_validation_errors_exit_2_with_record(small_file, tmp_path, capsys):
    out = tmp_path / "out"
    code, _, err = run(["solve", small_file, "--theta", "1.3", "--out", out], capsys)
    assert code == 2
    record = json.loads(err)
    assert record["exit_code"] == 2 and record["error"] == "ValidationError" and "theta" in record["message"]
    assert json.loads((out / "error.json").read_text()) == record
    bad = tmp_path / "bad.yaml"
    bad.write_text(SMALL.replace("  v_max_mps: 50.0\n", ""))
    code, _, err = run(["validate", bad], capsys)
    assert code == 2 and "v_max_mps" in json.loads(err)["message"]


def test_solver_failure_exits_3(small_file, tmp_path, capsys):
    code, _, err = run(["baseline", small_file, "--kind", "fly-and-hover", "--out", tmp_path / "o", "--no-plots"],
                       capsys)
    assert code == 3
    record = json.loads(err)
    assert record["error"] == "InfeasibleTour" and "at least" in record["message"]


def test_seedless_solve_is_deterministic(small_file, tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    argv = ["solve", small_file, "--theta", "0.3", "--max-outer", 4, "--no-plots", "--seedless"]
    assert run(argv + ["--out", out1], capsys)[0] == 0
    assert run(argv + ["--out", out2], capsys)[0] == 0
    b1 = json.loads((out1 / "result.json").read_text())
    b2 = json.loads((out2 / "result.json").read_text())
    b1.pop("timing"), b2.pop("timing")
    assert bundle_to_text(b1) == bundle_to_text(b2)


def test_sweep_table_cache_and_reproducibility(small_file, tmp_path, capsys):
    out = tmp_path / "sweep"
    argv = ["sweep", small_file, "--param", "theta", "--values", "0,0.2,0.4,0.6,0.8,1", "--max-outer", 4,
            "--out", out]
    code, stdout, _ = run(argv, capsys)
    assert code == 0
    with open(out / "sweep_theta.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["theta", "proposed", "circular", "static", "fly-and-hover"]
    assert len(rows) == 7 and all(len(r) == 5 for r in rows)
    # the short period rules out the tour; those cells carry the error and the sweep goes on
    assert all(r[4].startswith("ERROR: InfeasibleTour") for r in rows[1:])
    assert (out / "sweep_theta.png").stat().st_size > 0

    cells = sorted((out / "cells").glob("*.json"))
    assert len(cells) == 24
    stamps = {p.name: p.stat().st_mtime_ns for p in cells}
    removed = cells[:3]
    for p in removed:
        p.unlink()
    assert run(argv + ["--no-plots"], capsys)[0] == 0
    after = {p.name: p.stat().st_mtime_ns for p in (out / "cells").glob("*.json")}
    assert set(after) == set(stamps)
    # only the deleted cells were recomputed
    assert {n for n in after if after[n] != stamps[n]} == {p.name for p in removed}
    with open(out / "sweep_theta.csv") as fh:
        assert list(csv.reader(fh)) == rows

    # a sweep cell is reproduced by a single solve
    table = json.loads((out / "sweep_theta.json").read_text())
    solo = tmp_path / "solo"
    assert run(["solve", small_file, "--theta", "0.4", "--max-outer", 4, "--out", solo, "--no-plots"], capsys)[0] == 0
    eta = load_bundle(solo / "result.json")["eta"]
    assert abs(eta - table["eta"]["proposed"][2]) <= 1e-9


def test_period_sweep_grid(small_file, tmp_path, capsys):
    out = tmp_path / "ps"
    code, _, _ = run(["sweep", small_file, "--param", "period", "--values", "27,54", "--kinds", "static",
                      "--theta", "1", "--out", out, "--no-plots", "--jobs", 2], capsys)
    assert code == 0
    table = json.loads((out / "sweep_period.json").read_text())
    static = table["eta"]["static"]
    assert abs(static[1] - static[0]) <= 0.02 * static[0]


def test_sweep_rejects_unknown_kind(small_file, tmp_path, capsys):
    code, _, err = run(["sweep", small_file, "--values", "0", "--kinds", "zigzag", "--out", tmp_path], capsys)
    assert code == 2 and "zigzag" in json.loads(err)["message"]
