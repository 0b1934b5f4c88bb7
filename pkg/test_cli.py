import json

import pytest

import scenarios
from artifacts import write_scenario
from cli import main, summarize
from world_map import BoxObstacle, EndpointState, Scenario


def _scene(**update):
    base = Scenario(name="cli", bounds_lo=(-2.0, -1.0, 0.0), bounds_hi=(2.0, 1.0, 2.0),
                    start=EndpointState(p_b=(-1.5, 0.0, 1.0)), goal=EndpointState(p_b=(1.5, 0.0, 1.0)))
    return base.model_copy(update=update)


def test_missing_scenario_is_an_input_error(tmp_path, capsys):
    assert main(["plan", str(tmp_path / "nope.json")]) == 1
    assert "INPUT" in capsys.readouterr().err


def test_malformed_json_reports_location(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"name": "x",\n  "bounds_lo": [0, 0,, 0]}')
    assert main(["plan", str(path)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_schema_violation_is_an_input_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"bounds_lo": [0, 0, 0], "bounds_hi": [1, 1, 1]}))
    assert main(["plan", str(path)]) == 1


def test_unreachable_goal_exits_with_path_search_stage(tmp_path, capsys):
    wall = BoxObstacle(center=(0.0, 0.0, 1.0), half_extents=(0.1, 2.0, 2.0))
    path = tmp_path / "walled.json"
    write_scenario(_scene(obstacles=[wall]), str(path))
    assert main(["plan", str(path), "--out", str(tmp_path / "out")]) == 2
    assert "PATH SEARCH" in capsys.readouterr().err


def test_plan_is_reproducible(tmp_path):
    path = tmp_path / "open.json"
    write_scenario(_scene(), str(path))
    for run in ("a", "b"):
        assert main(["plan", str(path), "--seed", "3", "--out", str(tmp_path / run)]) == 0
    for name in ("stats.json", "trajectory.csv", "corridor.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert stats["seed"] == 3 and stats["mode"] == "basic"


def test_presets_listing_and_export(tmp_path, capsys):
    assert main(["presets"]) == 0
    assert "strike" in capsys.readouterr().out
    assert main(["presets", "--write", str(tmp_path)]) == 0
    written = {p.stem for p in tmp_path.iterdir()}
    assert set(scenarios.SKILLS) <= written
    assert "flat-grasp-telescopic" in written


def test_summary_groups_by_suite_keys():
    rows = [{"collision_model": "varying-ellipsoid", "success": True, "cost": 1.0, "iterations": 10},
            {"collision_model": "varying-ellipsoid", "success": False, "cost": 3.0, "iterations": 20},
            {"collision_model": "fixed-ellipsoid", "success": False, "cost": 5.0, "iterations": 30}]
    table = summarize("narrow-gate", rows)
    assert table["success_rate"].tolist() == [50.0, 0.0]
    assert table["cost"].tolist() == [2.0, 5.0]


def test_unknown_command_exits_by_argparse():
    with pytest.raises(SystemExit):
        main(["fly"])
