# File: artifacts.py
# Version: 1.2 (CSV / JSON / SVG outputs, atomic writes)

import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from pydantic import BaseModel  # noqa: E402

from core_model import delta_ik  # noqa: E402
from corridor import corridor_from_dict, corridor_to_dict  # noqa: E402
from errors import PlannerError  # noqa: E402
from solver import PlanResult, sample_states  # noqa: E402
from world_map import Scenario  # noqa: E402

plt.rcParams["svg.hashsalt"] = "am-planner"
plt.rcParams["svg.fonttype"] = "none"

TRAJECTORY_CSV = "trajectory.csv"
CORRIDOR_JSON = "corridor.json"
STATS_JSON = "stats.json"
TIMING_JSON = "timing.json"


# =====================================================================================
# ATOMIC WRITES
# =====================================================================================

def write_bytes(path: str, data: bytes):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_text(path: str, text: str):
    write_bytes(path, text.encode("utf-8"))


def write_json(path: str, data: Any):
    write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_scenario(scenario: Scenario, path: str):
    write_json(path, json.loads(scenario.model_dump_json()))


# =====================================================================================
# STATS SCHEMA
# =====================================================================================

class StageDocument(BaseModel):
    name: str
    iterations: int
    converged: bool
    message: str
    cost: float
    grad_inf: float
    fixed_rows: int


class StatsDocument(BaseModel):
    scenario: str
    mode: str
    seed: int
    converged: bool
    cost: float
    breakdown: Dict[str, float]
    iterations: int
    stages: List[StageDocument]
    segments: int
    duration: float
    waypoint_errors: List[Dict[str, Any]]
    limits: Dict[str, float]
    collision_free: Optional[bool]
    corridor_violation: float
    task: Dict[str, Any] = {}


@dataclass
class RunArtifacts:
    trajectory_csv: str
    corridor_json: str
    stats_json: str
    timing_json: str
    plots: List[str] = field(default_factory=list)


def stats_document(plan: PlanResult, scenario: Scenario, mode: str, seed: int,
                   extra: Dict[str, Any] = None) -> Dict[str, Any]:
    """Deterministic run summary (wall times live in timing.json)."""
    task = dict(plan.task)
    task.update(extra or {})
    doc = StatsDocument(
        scenario=scenario.name, mode=mode, seed=seed, converged=plan.converged, cost=plan.cost,
        breakdown=plan.breakdown.model_dump(), iterations=plan.iterations,
        stages=[StageDocument(name=s.name, iterations=s.iterations, converged=s.converged,
                              message=s.message, cost=s.cost, grad_inf=s.grad_inf,
                              fixed_rows=s.fixed_rows) for s in plan.stages],
        segments=plan.trajectory.M, duration=plan.trajectory.total_duration,
        waypoint_errors=plan.waypoint_errors, limits=plan.limits,
        collision_free=plan.collision_free, corridor_violation=plan.corridor_violation, task=task,
    )
    return json.loads(doc.model_dump_json())


def timing_document(plan: PlanResult) -> Dict[str, Any]:
    return {"wall_time": plan.wall_time, "stages": {s.name: s.wall_time for s in plan.stages}}


# =====================================================================================
# TRAJECTORY CSV
# =====================================================================================

def _joint_angles(p_e: np.ndarray, scenario: Scenario) -> np.ndarray:
    q = np.full_like(p_e, np.nan)
    for i, p in enumerate(p_e):
        try:
            q[i] = delta_ik(p, scenario.params, check_workspace=False)
        except PlannerError:
            pass
    return q


def trajectory_frame(plan: PlanResult, scenario: Scenario, dt: float = 0.01) -> pd.DataFrame:
    s = sample_states(plan.trajectory, scenario, dt)
    cols = {"t": s["t"]}
    for key in ("p_b", "v_b", "a_b", "j_b", "p_e", "v_e"):
        for k, axis in enumerate("xyz"):
            cols[f"{key}_{axis}"] = s[key][:, k]
    q = _joint_angles(s["p_e"], scenario)
    for k in range(3):
        cols[f"q{k + 1}"] = q[:, k]
    for key in ("thrust", "omega_x", "omega_y", "h", "roll", "pitch"):
        cols[key] = s[key]
    return pd.DataFrame(cols)


def write_run(plan: PlanResult, scenario: Scenario, out_dir: str, mode: str, seed: int,
              extra: Dict[str, Any] = None) -> RunArtifacts:
    os.makedirs(out_dir, exist_ok=True)
    paths = RunArtifacts(
        trajectory_csv=os.path.join(out_dir, TRAJECTORY_CSV),
        corridor_json=os.path.join(out_dir, CORRIDOR_JSON),
        stats_json=os.path.join(out_dir, STATS_JSON),
        timing_json=os.path.join(out_dir, TIMING_JSON),
    )
    frame = trajectory_frame(plan, scenario)
    write_text(paths.trajectory_csv, frame.to_csv(index=False, float_format="%.9g"))
    write_json(paths.corridor_json, corridor_to_dict(plan.corridor))
    write_json(paths.stats_json, stats_document(plan, scenario, mode, seed, extra))
    write_json(paths.timing_json, timing_document(plan))
    return paths


# =====================================================================================
# PLOTS
# =====================================================================================

def cross_section(A: np.ndarray, b: np.ndarray, z0: float) -> np.ndarray:
    """Vertices (counter-clockwise) of {x : A x <= b, x_z = z0} projected on xy; empty if none."""
    A2, b2 = A[:, :2], b - A[:, 2] * z0
    keep = np.linalg.norm(A2, axis=1) > 1e-12
    if np.any(~keep & (b2 < 0)):
        return np.zeros((0, 2))
    A2, b2 = A2[keep], b2[keep]
    pts = []
    for i in range(len(A2)):
        for j in range(i + 1, len(A2)):
            M = np.array([A2[i], A2[j]])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            p = np.linalg.solve(M, [b2[i], b2[j]])
            if np.all(A2 @ p <= b2 + 1e-9):
                pts.append(p)
    if len(pts) < 3:
        return np.zeros((0, 2))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    c = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
    return pts[order]


def _save_svg(fig, path: str):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    write_bytes(path, buf.getvalue())


def plot_run(run_dir: str) -> List[str]:
    df = pd.read_csv(os.path.join(run_dir, TRAJECTORY_CSV))
    with open(os.path.join(run_dir, CORRIDOR_JSON), "r", encoding="utf-8") as f:
        corridor = corridor_from_dict(json.load(f))
    out = []

    fig, ax = plt.subplots(figsize=(6, 5))
    z0 = float(df["p_b_z"].mean())
    for poly in corridor.polys:
        v = cross_section(poly.A, poly.b, z0)
        if len(v):
            ax.fill(v[:, 0], v[:, 1], alpha=0.15, color="tab:blue", lw=0.5)
    ax.plot(df["p_b_x"], df["p_b_y"], color="tab:orange", lw=1.5, label="body")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(f"xy plane, corridor section at z = {z0:.2f} m")
    ax.legend(loc="best")
    out.append(os.path.join(run_dir, "xy.svg"))
    _save_svg(fig, out[-1])

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6, 6))
    for ax, axis in zip(axes, "xyz"):
        ax.plot(df["t"], df[f"p_b_{axis}"], label="p_b")
        ax.plot(df["t"], df[f"v_b_{axis}"], label="v_b")
        ax.set_ylabel(axis)
    axes[0].legend(loc="best")
    axes[-1].set_xlabel("t [s]")
    out.append(os.path.join(run_dir, "axes.svg"))
    _save_svg(fig, out[-1])

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(df["t"], df["roll"], label="roll")
    ax.plot(df["t"], df["pitch"], label="pitch")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("deg")
    ax.legend(loc="best")
    out.append(os.path.join(run_dir, "attitude.svg"))
    _save_svg(fig, out[-1])

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(df["t"], df["p_e_z"], color="tab:green")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("end-effector z (delta frame) [m]")
    out.append(os.path.join(run_dir, "ee_z.svg"))
    _save_svg(fig, out[-1])
    return out
