import csv
import json

import numpy as np
import pytest

from solaruav.cli import main
from solaruav.radio import CoverageMap
from solaruav.scenario import HourlyDemand, Scenario, save_scenario

from .conftest import linear_map


@pytest.fixture()
def small(tmp_path):
    """3-UAV, 4-hour scenario file and a matching hand-made map."""
    sc = Scenario(area_width=1000.0, area_height=1000.0, horizon_T=4, fleet_size_N=3, start_hour=9,
                  demand=[HourlyDemand(n, 0.5, ((300, 300, 60),)) for n in (12, 20, 20, 8)]).validate()
    path = tmp_path / "small.toml"
    save_scenario(sc, path)
    mp = tmp_path / "small_map.csv"
    linear_map(sc).to_csv(mp)
    return sc, path, mp


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_map_command(tmp_path, small):
    sc, path, _ = small
    assert main(["map", "--scenario", str(path), "--seed", "3", "--out", str(tmp_path / "a")]) == 0
    assert main(["map", "--scenario", str(path), "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "coverage_map.csv").read_bytes()
    assert a == (tmp_path / "b" / "coverage_map.csv").read_bytes()
    assert len(rows(tmp_path / "a" / "coverage_map.csv")) == 4 * 4
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["command"] == "map" and man["seed"] == 3
    assert man["parameters"]["scenario"]["fleet_size_N"] == 3
    assert sorted(p.name for p in (tmp_path / "a").iterdir()) == ["coverage_map.csv", "manifest.json",
                                                                  "placements.json"]


def test_missing_scenario_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert main(["map", "--scenario", str(missing), "--out", str(tmp_path / "o")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_out_root_env(tmp_path, small, monkeypatch):
    _, path, mp = small
    monkeypatch.setenv("SOLARUAV_OUT_ROOT", str(tmp_path / "root"))
    assert main(["oracle", "--scenario", str(path), "--map", str(mp), "--mode", "dp", "--bins", "11",
                 "--out", "rel"]) == 0
    assert (tmp_path / "root" / "rel" / "manifest.json").exists()


def test_train_command(tmp_path, small):
    _, path, mp = small
    out = tmp_path / "train"
    code = main(["train", "--scenario", str(path), "--map", str(mp), "--episodes", "10", "--seed", "1",
                 "--preset", "desk", "--set", "hidden=16x16", "--set", "batch_size=8", "--set", "gamma=0.5",
                 "--out", str(out)])
    assert code == 0
    assert len(rows(out / "training_log.csv")) == 10
    man = json.loads((out / "manifest.json").read_text())
    assert man["parameters"]["hyper"]["gamma"] == 0.5
    assert (out / "policy.npz").exists()

    ev = tmp_path / "eval"
    assert main(["eval", "--scenario", str(path), "--map", str(mp), "--policy", str(out / "policy.npz"),
                 "--out", str(ev)]) == 0
    assert len(rows(ev / "hourly.csv")) == 4


def test_train_bad_override(tmp_path, small):
    _, path, mp = small
    assert main(["train", "--scenario", str(path), "--map", str(mp), "--episodes", "1",
                 "--set", "nonsense=1", "--out", str(tmp_path / "t")]) == 2


def test_fleet_mismatch_is_input_error(tmp_path, small, capsys):
    sc, path, _ = small
    other = tmp_path / "map2.csv"
    CoverageMap(np.zeros((4, 3), dtype=int), [sc.n_users(t) for t in range(4)]).to_csv(other)
    assert main(["train", "--scenario", str(path), "--map", str(other), "--episodes", "1",
                 "--out", str(tmp_path / "t")]) == 2
    assert "fleet-size mismatch" in capsys.readouterr().err


def test_oracle_exhaustive_and_budget(tmp_path):
    sc = Scenario(area_width=1000.0, area_height=1000.0, horizon_T=6, fleet_size_N=2, start_hour=8,
                  demand=[HourlyDemand(10)] * 6).validate()
    path = tmp_path / "two.toml"
    save_scenario(sc, path)
    mp = tmp_path / "two_map.csv"
    linear_map(sc).to_csv(mp)
    out = tmp_path / "ex"
    assert main(["oracle", "--scenario", str(path), "--map", str(mp), "--mode", "exhaustive",
                 "--out", str(out)]) == 0
    assert len(rows(out / "profile.csv")) == 6
    man = json.loads((out / "manifest.json").read_text())
    assert man["parameters"]["value"] == man["parameters"]["true_return"]

    big = sc.replace(horizon_T=12, demand=[HourlyDemand(10)] * 12)
    save_scenario(big, path)
    linear_map(big).to_csv(mp)
    assert main(["oracle", "--scenario", str(path), "--map", str(mp), "--mode", "exhaustive",
                 "--out", str(tmp_path / "ex2")]) == 3


def test_oracle_dp_single_uav(tmp_path):
    sc = Scenario(area_width=1000.0, area_height=1000.0, fleet_size_N=1,
                  demand=[HourlyDemand(5)] * 24).validate()
    path = tmp_path / "one.toml"
    save_scenario(sc, path)
    mp = tmp_path / "one_map.csv"
    linear_map(sc).to_csv(mp)
    out = tmp_path / "dp"
    assert main(["oracle", "--scenario", str(path), "--map", str(mp), "--bins", "200", "--out", str(out)]) == 0
    assert len(rows(out / "profile.csv")) == 24
    assert "value" in json.loads((out / "manifest.json").read_text())["parameters"]


def test_eval_greedy(tmp_path, desk, desk_map):
    path = tmp_path / "desk.toml"
    save_scenario(desk, path)
    mp = tmp_path / "desk_map.csv"
    desk_map.to_csv(mp)
    before = mp.read_bytes()
    out = tmp_path / "g"
    assert main(["eval", "--scenario", str(path), "--map", str(mp), "--baseline", "greedy",
                 "--out", str(out)]) == 0
    hourly = rows(out / "hourly.csv")
    assert len(hourly) == 24
    cum = [int(r["cumulative_served"]) for r in hourly]
    assert cum == sorted(cum)
    trace = rows(out / "trace.csv")
    assert float(hourly[-1]["cumulative_E_h"]) == pytest.approx(sum(float(r["E_h"]) for r in trace), abs=1e-5)
    assert float(hourly[-1]["cumulative_E_c"]) == pytest.approx(sum(float(r["E_c"]) for r in trace), abs=1e-5)
    assert mp.read_bytes() == before
    assert len(rows(out / "metrics.csv")) == 1


def test_scenario_template(tmp_path):
    out = tmp_path / "desk.toml"
    assert main(["scenario", "--preset", "desk", "--out", str(out)]) == 0
    assert "fleet_size_N = 3" in out.read_text()
