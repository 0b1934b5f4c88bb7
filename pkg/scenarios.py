# File: scenarios.py
# Version: 1.2 (skill presets, benchmark scenes, success checks)

import os
from math import floor
from typing import Dict, List, Optional, Tuple

import numpy as np

import settings
from core_model import AmParams, params_for_workspace
from costs import Surface, VelocitySpec, WaypointConstraint, Weights
from solver import PlanResult, sample_states
from world_map import (
    BoxObstacle,
    EndpointState,
    Scenario,
    SlabObstacle,
    in_plane_axes,
)

SKILLS = ("strike", "grasp", "lift", "press", "wind", "pull", "push", "cross", "write")

# inclined-surface task geometry
SURFACE_CENTER = np.array([0.0, 0.0, 1.0])
SURFACE_HALF = (0.5, 0.5)
SURFACE_THICKNESS = 0.1
EE_STANDOFF = 0.05
# voxel inflation of the tilted plate stays below the standoff at this edge length
TASK_RESOLUTION = 0.05
TASK_TOLERANCE = 0.03
ATTITUDE_TOLERANCE_DEG = 5.0
GRASP_VELOCITY = (0.0, 0.0, -0.2)

# collision benchmarks: smaller airframe, arm one voxel shorter
BENCH_PARAMS = {"r_e": 0.11, "workspace_lo": (-0.04, -0.04, -0.19)}
BENCH_WEIGHTS = {"w_safety": 1e7}
HOLE_PARAMS = {"r_e": 0.11, "workspace_lo": (-0.04, -0.04, -0.21)}
VIOLATION_TOLERANCE = 2e-3

GATE_GAPS = (0.60, 0.55, 0.50, 0.45, 0.40, 0.35, 0.30, 0.25)
HOLE_ANGLES = (20.0, 40.0, 60.0)
HOLE_DEPTHS = (-0.07, -0.13, -0.20)
IL_ROLLS = (25.0, 40.0, 55.0)


def _bench_params(update=None) -> AmParams:
    return AmParams.from_config().model_copy(update=update or BENCH_PARAMS)


def _bench_weights() -> Weights:
    return Weights.from_config().model_copy(update=BENCH_WEIGHTS)


def _rot_z(psi: float) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _vec(p) -> Tuple[float, float, float]:
    return tuple(float(x) for x in p)


# =====================================================================================
# PRESET FILES
# =====================================================================================

def preset_path(name: str) -> str:
    return os.path.join(settings.PRESETS_DIR, f"{name}.json")


def list_presets() -> List[str]:
    if not os.path.isdir(settings.PRESETS_DIR):
        return []
    return sorted(f[:-5] for f in os.listdir(settings.PRESETS_DIR) if f.endswith(".json"))


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return Scenario.model_validate_json(f.read())


def load_preset(name: str) -> Scenario:
    return load_scenario(preset_path(name))


# =====================================================================================
# INCLINED-SURFACE TASKS (strike / grasp)
# =====================================================================================

def surface_normal(theta_deg: float, azimuth_deg: float = 0.0) -> np.ndarray:
    th, psi = np.radians(theta_deg), np.radians(azimuth_deg)
    return np.array([np.sin(th) * np.cos(psi), np.sin(th) * np.sin(psi), np.cos(th)])


def inclined_scene(skill: str, theta_deg: float, start_xy, azimuth_deg: float = 0.0,
                   name: Optional[str] = None, seed: int = 0, k_guide: int = 2,
                   collision_model: str = "varying-ellipsoid") -> Scenario:
    """Plate tilted by theta_deg facing azimuth_deg; the end-effector touches it with thrust along its normal."""
    n = surface_normal(theta_deg, azimuth_deg)
    top = SURFACE_CENTER + 0.5 * SURFACE_THICKNESS * n
    target = top + EE_STANDOFF * n
    reach = max(3.0, float(np.linalg.norm(start_xy))) + 0.6
    z_fly = float(SURFACE_CENTER[2] + 0.3)
    goal = SURFACE_CENTER + _rot_z(np.radians(azimuth_deg)) @ np.array([2.0, 0.0, 0.0])
    task = WaypointConstraint(
        kind="end_effector", position=_vec(target), orientation=_vec(n),
        surface=Surface(point=_vec(top), normal=_vec(n), half_extents=SURFACE_HALF),
        velocity=VelocitySpec(mask=(1, 1, 1), value=GRASP_VELOCITY) if skill == "grasp" else None,
        label=skill,
    )
    return Scenario(
        name=name or f"{skill}-{theta_deg:g}deg",
        bounds_lo=(-reach, -reach, 0.2), bounds_hi=(reach, reach, 2.2), resolution=TASK_RESOLUTION,
        obstacles=[SlabObstacle(point=_vec(SURFACE_CENTER), normal=_vec(n), half_extents=SURFACE_HALF,
                                thickness=SURFACE_THICKNESS)],
        start=EndpointState(p_b=(float(start_xy[0]), float(start_xy[1]), z_fly)),
        goal=EndpointState(p_b=(float(goal[0]), float(goal[1]), z_fly)),
        waypoints=[task], task_index=0, k_guide=k_guide, seed=seed,
        collision_model=collision_model,
    )


def sample_start(rng: np.random.Generator, r_range=(1.5, 3.0), behind: bool = False,
                 azimuth_deg: float = 0.0) -> np.ndarray:
    """Start in the annulus around the surface; `behind` keeps it on the side the surface faces away from."""
    r = rng.uniform(*r_range)
    ang = rng.uniform(2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0) if behind else rng.uniform(0.0, 2.0 * np.pi)
    ang += np.radians(azimuth_deg)
    return SURFACE_CENTER[:2] + r * np.array([np.cos(ang), np.sin(ang)])


def task_report(plan: PlanResult, scenario: Scenario) -> Dict[str, object]:
    """End-effector within 3 cm of the target and thrust parallel to the surface normal within 5 deg."""
    entries = [e for e in plan.waypoint_errors if not e["guide"]]
    entry = entries[scenario.task_index]
    ee_error = entry["position_error"]
    att_error = entry.get("orientation_error_deg", 0.0)
    return {
        "task_success": bool(ee_error <= TASK_TOLERANCE and att_error <= ATTITUDE_TOLERANCE_DEG),
        "ee_error": ee_error,
        "attitude_error_deg": att_error,
    }


# =====================================================================================
# COLLISION BENCHMARKS
# =====================================================================================

def _snap_down(x: float, res: float) -> float:
    return floor(x / res + 1e-9) * res


def narrow_gate_scene(gap: float, collision_model: str = "varying-ellipsoid",
                      ee_z: float = -0.18) -> Scenario:
    """Wall at x = 0 with a horizontal slot of height `gap`; faces lie on the voxel lattice."""
    res = 0.05
    lower = round(_snap_down(1.0 - 0.5 * gap, res), 6)
    upper = round(lower + gap, 6)
    z_c = lower + 0.5 * gap
    floor_z, ceil_z = -1.0, 3.0
    obstacles = [
        BoxObstacle(center=(0.0, 0.0, 0.5 * (floor_z + lower)), half_extents=(0.1, 3.0, 0.5 * (lower - floor_z))),
        BoxObstacle(center=(0.0, 0.0, 0.5 * (upper + ceil_z)), half_extents=(0.1, 3.0, 0.5 * (ceil_z - upper))),
    ]
    return Scenario(
        name=f"narrow-gate-{gap:.2f}-{collision_model}",
        bounds_lo=(-2.0, -0.5, 0.3), bounds_hi=(2.0, 0.5, 1.7), resolution=res,
        obstacles=obstacles,
        start=EndpointState(p_b=(-1.5, 0.0, z_c), p_e=(0.0, 0.0, ee_z)),
        goal=EndpointState(p_b=(1.5, 0.0, z_c), p_e=(0.0, 0.0, ee_z)),
        params=_bench_params(), weights=_bench_weights(), collision_model=collision_model,
    )


def tilted_hole_scene(angle_deg: float, ee_z: float, collision_model: str = "varying-ellipsoid",
                      hole: float = 0.4) -> Scenario:
    """Plate tilted by angle_deg from vertical with a square hole centered on the straight start-goal line."""
    a = np.radians(angle_deg)
    n, u, v = in_plane_axes((np.cos(a), 0.0, np.sin(a)))
    outer_u, outer_v, thickness = 2.5, 1.5, 0.1
    pieces = []
    for sign in (-1.0, 1.0):
        off_u = 0.5 * (0.5 * hole + outer_u)
        pieces.append((sign * off_u * u, (0.5 * (outer_u - 0.5 * hole), outer_v)))
        off_v = 0.5 * (0.5 * hole + outer_v)
        pieces.append((sign * off_v * v, (0.5 * hole, 0.5 * (outer_v - 0.5 * hole))))
    obstacles = [SlabObstacle(point=_vec(SURFACE_CENTER + off), normal=_vec(n), half_extents=half,
                              thickness=thickness) for off, half in pieces]
    return Scenario(
        name=f"tilted-hole-{angle_deg:g}deg-{ee_z:g}-{collision_model}",
        bounds_lo=(-2.0, -0.8, 0.3), bounds_hi=(2.0, 0.8, 1.7), resolution=0.05,
        obstacles=obstacles,
        start=EndpointState(p_b=(-1.5, 0.0, 1.0), p_e=(0.0, 0.0, ee_z)),
        goal=EndpointState(p_b=(1.5, 0.0, 1.0), p_e=(0.0, 0.0, ee_z)),
        params=_bench_params(HOLE_PARAMS), weights=_bench_weights(), collision_model=collision_model,
    )


def random_cubes_scene(seed: int, n_cubes: int = 12, collision_model: str = "varying-ellipsoid") -> Scenario:
    rng = np.random.default_rng(seed)
    start, goal = np.array([-2.0, -2.0, 1.0]), np.array([2.0, 2.0, 1.0])
    cubes = []
    while len(cubes) < n_cubes:
        c = np.array([rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4), rng.uniform(0.5, 1.5)])
        half = rng.uniform(0.1, 0.25)
        if min(np.linalg.norm(c - start), np.linalg.norm(c - goal)) < 0.8:
            continue
        cubes.append(BoxObstacle(center=_vec(c), half_extents=(half, half, half)))
    return Scenario(
        name=f"random-cubes-{seed}", bounds_lo=(-2.5, -2.5, 0.2), bounds_hi=(2.5, 2.5, 1.8),
        resolution=0.1, obstacles=cubes,
        start=EndpointState(p_b=_vec(start)), goal=EndpointState(p_b=_vec(goal)),
        collision_model=collision_model, seed=seed,
    )


def collision_report(plan: PlanResult, scenario: Scenario) -> Dict[str, object]:
    """Success: physically collision-free and the planner's own collision volume stays in the corridor."""
    states = sample_states(plan.trajectory, scenario)
    h = np.maximum(scenario.params.p_B_in_D[2] - states["p_e"][:, 2], scenario.params.r_e)
    near_wall = np.abs(states["p_b"][:, 0]) <= 0.1 + scenario.params.r_e
    return {
        "success": bool(plan.collision_free and plan.corridor_violation <= VIOLATION_TOLERANCE),
        "collision_free": bool(plan.collision_free),
        "corridor_violation": plan.corridor_violation,
        "min_h_at_wall": float(np.min(h[near_wall])) if np.any(near_wall) else float(np.min(h)),
        "max_h": float(np.max(h)),
    }


# =====================================================================================
# END-EFFECTOR ACCURACY (manipulator variants)
# =====================================================================================

def flat_grasp_scene(variant: str = "delta") -> Scenario:
    """Object on a table top; end-effector comes down on it with level attitude."""
    params = params_for_workspace(variant)
    target = (0.0, 0.0, 0.85)
    task = WaypointConstraint(kind="end_effector", position=target, orientation=(0.0, 0.0, 1.0),
                              surface=Surface(point=(0.0, 0.0, 0.8), normal=(0.0, 0.0, 1.0),
                                              half_extents=(0.4, 0.4)),
                              label="grasp")
    p_e = (0.0, 0.0, float(params.workspace_mid[2]))
    return Scenario(
        name=f"flat-grasp-{variant}", bounds_lo=(-2.5, -1.0, 0.0), bounds_hi=(2.5, 1.0, 2.0),
        resolution=0.1, obstacles=[BoxObstacle(center=(0.0, 0.0, 0.4), half_extents=(0.4, 0.4, 0.4))],
        start=EndpointState(p_b=(-2.0, 0.0, 1.2), p_e=p_e), goal=EndpointState(p_b=(2.0, 0.0, 1.2), p_e=p_e),
        waypoints=[task], task_index=0, params=params,
    )


def ee_min_distance(plan: PlanResult, scenario: Scenario, target=None) -> float:
    target = np.asarray(target if target is not None else scenario.waypoints[scenario.task_index].position)
    states = sample_states(plan.trajectory, scenario, dt=0.002)
    return float(np.min(np.linalg.norm(states["p_e_world"] - target, axis=1)))

