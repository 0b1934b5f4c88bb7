import json

from fastapi.testclient import TestClient

from api import app

client = TestClient(app)

OPEN = {
    "name": "api-open",
    "bounds_lo": [-2.0, -1.0, 0.0], "bounds_hi": [2.0, 1.0, 2.0],
    "start": {"p_b": [-1.5, 0.0, 1.0]}, "goal": {"p_b": [1.5, 0.0, 1.0]},
}


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_presets_listed():
    r = client.get("/presets")
    assert r.status_code == 200
    assert "grasp" in r.json()["presets"]


def test_plan_needs_a_scenario():
    assert client.post("/plan", json={}).status_code == 422
    assert client.post("/plan", json={"preset": "juggle"}).status_code == 404


def test_plan_open_room():
    r = client.post("/plan", json={"scenario": OPEN, "seed": 4})
    assert r.status_code == 200
    body = r.json()
    assert body["stats"]["scenario"] == "api-open"
    assert body["stats"]["seed"] == 4
    assert "wall_time" in body["timing"]
    assert "wall_time" not in json.dumps(body["stats"])


def test_unreachable_goal_reports_stage():
    walled = {**OPEN, "obstacles": [{"kind": "box", "center": [0.0, 0.0, 1.0], "half_extents": [0.1, 2.0, 2.0]}]}
    r = client.post("/plan", json={"scenario": walled})
    assert r.status_code == 422
    detail = r.json()["detail"]
    assert detail["error"] == "NoPath"
    assert detail["stage"] == "path search"
