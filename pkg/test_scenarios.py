import numpy as np
import pytest

import scenarios
from solver import plan_basic
from world_map import point_in_obstacles, rasterize


def test_nine_skill_presets_ship_and_load():
    names = scenarios.list_presets()
    assert sorted(names) == sorted(scenarios.SKILLS)
    for name in names:
        sc = scenarios.load_preset(name)
        assert sc.name == name
        assert sc.waypoints
        assert sc.task_index is not None


def test_surface_normal_and_task_target():
    n = scenarios.surface_normal(40.0, 90.0)
    assert np.linalg.norm(n) == pytest.approx(1.0)
    assert np.arccos(n[2]) == pytest.approx(np.radians(40.0))
    sc = scenarios.inclined_scene("grasp", 40.0, (-2.0, 0.5))
    task = sc.waypoints[0]
    n0 = scenarios.surface_normal(40.0)
    top = scenarios.SURFACE_CENTER + 0.5 * scenarios.SURFACE_THICKNESS * n0
    assert np.allclose(task.surface.point, top)
    assert np.allclose(task.position, top + scenarios.EE_STANDOFF * n0)
    assert task.velocity.value == scenarios.GRASP_VELOCITY
    assert scenarios.inclined_scene("strike", 40.0, (-2.0, 0.5)).waypoints[0].velocity is None


def test_start_samples_stay_in_annulus_behind_surface():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = scenarios.sample_start(rng, (1.5, 3.0), behind=True)
        r = np.linalg.norm(p - scenarios.SURFACE_CENTER[:2])
        assert 1.5 <= r <= 3.0
        assert p[0] < 0.0


@pytest.mark.parametrize("gap", [0.6, 0.35])
def test_narrow_gate_slot_height(gap):
    sc = scenarios.narrow_gate_scene(gap)
    lower = sc.obstacles[0].center[2] + sc.obstacles[0].half_extents[2]
    upper = sc.obstacles[1].center[2] - sc.obstacles[1].half_extents[2]
    assert upper - lower == pytest.approx(gap)
    assert lower / sc.resolution == pytest.approx(round(lower / sc.resolution))
    grid = rasterize(sc)
    assert grid.is_free((0.0, 0.0, 0.5 * (lower + upper)))


def test_tilted_hole_center_is_open():
    sc = scenarios.tilted_hole_scene(40.0, -0.20)
    assert not point_in_obstacles(sc, np.array([[0.0, 0.0, 1.0]])).any()
    assert point_in_obstacles(sc, np.array([[0.0, 0.0, 1.5]])).any()
    assert sc.params.workspace_lo[2] <= -0.20


def test_random_cubes_are_reproducible():
    a, b = scenarios.random_cubes_scene(7), scenarios.random_cubes_scene(7)
    assert [o.center for o in a.obstacles] == [o.center for o in b.obstacles]
    assert len(a.obstacles) == 12


def test_flat_grasp_variants_change_only_the_arm():
    d, t = scenarios.flat_grasp_scene("delta"), scenarios.flat_grasp_scene("telescopic")
    assert d.params.workspace_lo != t.params.workspace_lo
    assert d.params.m_c == t.params.m_c


@pytest.mark.parametrize("name", sorted(scenarios.SKILLS))
def test_every_preset_plans_with_default_weights(name):
    sc = scenarios.load_preset(name)
    plan = plan_basic(sc)
    assert plan.collision_free
    assert plan.corridor_violation <= 0.0
    for entry in plan.waypoint_errors:
        assert entry["position_error"] <= scenarios.TASK_TOLERANCE, entry["label"]
