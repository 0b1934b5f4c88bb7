# File: solver.py
# Version: 1.5 (L-BFGS + problem assembly + single-stage plan + safety tightening)

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, model_validator

import settings
import spline
from core_model import rotation_from_thrust, thrust_vectors
from corridor import Corridor, build_sfc, chebyshev_center
from costs import CostBreakdown, CostProblem, WaypointConstraint, ee_world, total_cost
from errors import LineSearchFailure, NonFiniteObjective, PlannerError
from world_map import (
    OccupancyGrid,
    Scenario,
    SolverSettings,
    point_in_obstacles,
    rasterize,
    search_path,
)


class SolveConfig(BaseModel):
    eps_grad: float = 1e-5
    relative: bool = True
    max_iters: int = 400
    memory: int = 8
    c1: float = 1e-4
    c2: float = 0.9
    max_linesearch: int = 60

    @model_validator(mode="after")
    def check_invariants(self):
        if not self.eps_grad > 0:
            raise ValueError("eps_grad must be positive")
        if self.memory < 3:
            raise ValueError("memory must be at least 3")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("line search needs 0 < c1 < c2 < 1")
        return self

    @classmethod
    def from_settings(cls, s: SolverSettings, loose: bool = False) -> "SolveConfig":
        return cls(eps_grad=s.eps_loose if loose else s.eps_strict, relative=s.relative,
                   max_iters=s.max_iters, memory=s.memory, c1=s.c1, c2=s.c2)


@dataclass
class MinimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    converged: bool
    message: str
    history: List[float] = field(default_factory=list)
    failure: Optional[LineSearchFailure] = None


# =====================================================================================
# L-BFGS
# =====================================================================================

def _two_loop(g: np.ndarray, S: Sequence[np.ndarray], Y: Sequence[np.ndarray]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def _tolerance(config: SolveConfig, f: float) -> float:
    return config.eps_grad * (1.0 + abs(f)) if config.relative else config.eps_grad


def minimize(objective: Callable, x0, config: SolveConfig = None) -> MinimizeResult:
    """Limited-memory BFGS with a weak-Wolfe bisection line search."""
    config = config or SolveConfig()
    x = np.asarray(x0, dtype=float).copy()
    f, g = objective(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteObjective("objective is not finite at the initial point")
    history = [f]
    if np.max(np.abs(g), initial=0.0) <= _tolerance(config, f):
        return MinimizeResult(x, f, g, 0, True, "gradient tolerance met", history)

    S, Y = deque(maxlen=config.memory), deque(maxlen=config.memory)
    message = "iteration limit"
    converged = False
    failure = None
    it = 0
    for it in range(1, config.max_iters + 1):
        d = -_two_loop(g, S, Y)
        slope = g @ d
        if slope >= 0.0:
            S.clear()
            Y.clear()
            d = -g
            slope = g @ d
        t = 1.0 if S else min(1.0, 1.0 / max(np.linalg.norm(d), 1e-12))

        lo, hi = 0.0, np.inf
        accepted = None
        for _ in range(config.max_linesearch):
            fn, gn = objective(x + t * d)
            if not np.isfinite(fn) or fn > f + config.c1 * t * slope:
                hi = t
            elif gn @ d < config.c2 * slope:
                lo = t
            else:
                accepted = (t, fn, gn)
                break
            t = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * t
        if accepted is None:
            failure = LineSearchFailure(f"no weak-Wolfe step at iteration {it}")
            message = "line search failed"
            settings.log("L-BFGS", f"⚠️ {failure}, keeping best iterate")
            it -= 1
            break

        t, fn, gn = accepted
        s, y = t * d, gn - g
        if s @ y > 1e-12 * (y @ y):
            S.append(s)
            Y.append(y)
        x, f, g = x + s, fn, gn
        history.append(f)
        if np.max(np.abs(g)) <= _tolerance(config, f):
            converged = True
            message = "gradient tolerance met"
            break
    return MinimizeResult(x, f, g, it, converged, message, history, failure)


# =====================================================================================
# PROBLEM ASSEMBLY
# =====================================================================================

@dataclass
class Problem:
    boundary: Tuple[spline.BoundaryState, spline.BoundaryState]
    template: spline.DecisionVars
    cost: CostProblem
    corridor: Corridor
    constraints: List[WaypointConstraint]

    @property
    def free_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.template.fixed)

    @property
    def dim(self) -> int:
        return 3 * len(self.free_rows) + self.template.Q.size + self.template.M

    def pack(self, dv: spline.DecisionVars) -> np.ndarray:
        return np.concatenate([dv.P[self.free_rows].ravel(), dv.Q.ravel(), dv.tau])

    def unpack(self, x: np.ndarray) -> spline.DecisionVars:
        dv = self.template.copy()
        nf = 3 * len(self.free_rows)
        nq = dv.Q.size
        dv.P[self.free_rows] = x[:nf].reshape(-1, 3)
        dv.Q = x[nf:nf + nq].reshape(-1, 3).copy()
        dv.tau = x[nf + nq:].copy()
        return dv

    def evaluate(self, x: np.ndarray):
        dv = self.unpack(x)
        traj = spline.construct(self.boundary, dv)
        J, dP, dQ, dtau, breakdown = total_cost(traj, dv, self.cost)
        grad = np.concatenate([dP[self.free_rows].ravel(), dQ.ravel(), dtau])
        return J, grad, traj, breakdown

    def objective(self, x: np.ndarray):
        try:
            J, grad, _, _ = self.evaluate(x)
        except PlannerError:
            return np.inf, np.zeros_like(x)
        return J, grad


def _initial_vars(scenario: Scenario, corridor: Corridor, constraints, boundary) -> spline.DecisionVars:
    params = scenario.params
    M = corridor.M
    P = np.zeros((M - 1, 3))
    fixed = np.zeros(M - 1, dtype=bool)
    for j in range(M - 1):
        center, _ = chebyshev_center([corridor.polys[j], corridor.polys[j + 1]])
        P[j] = center
    for lam, con in enumerate(constraints):
        j = corridor.phi[lam]
        P[j] = con.path_point(params)
        fixed[j] = con.kind == "quadrotor"
    Q = np.tile([0.0, 0.0, params.workspace_mid[2]], (M - 1, 1))
    knots = np.vstack([boundary[0].pos[:3], P, boundary[1].pos[:3]])
    legs = np.maximum(np.linalg.norm(np.diff(knots, axis=0), axis=1), 0.1)
    tau = np.log(legs / (0.7 * params.v_b_max))
    return spline.DecisionVars(P=P, Q=Q, tau=tau, fixed=fixed)


def assemble(scenario: Scenario, corridor: Corridor, constraints: Sequence[WaypointConstraint],
             warm: spline.DecisionVars = None):
    """Returns (x0, objective, problem). `warm` overrides the initializer but not the fixing."""
    constraints = list(constraints)
    boundary = scenario.boundary()
    template = _initial_vars(scenario, corridor, constraints, boundary)
    if warm is not None:
        keep = template.fixed.copy()
        fixed_values = template.P[keep].copy()
        template = warm.copy()
        template.fixed = keep
        template.P[keep] = fixed_values
    motions = [(m, m.active_segments(corridor.phi, corridor.M)) for m in scenario.motions]
    cost = CostProblem(params=scenario.params, weights=scenario.weights, polys=corridor.polys,
                       constraints=constraints, phi=corridor.phi, motions=motions,
                       collision_model=scenario.collision_model)
    problem = Problem(boundary=boundary, template=template, cost=cost, corridor=corridor,
                      constraints=constraints)
    return problem.pack(template), problem.objective, problem


# =====================================================================================
# PLAN
# =====================================================================================

@dataclass
class StageStats:
    name: str
    iterations: int
    converged: bool
    message: str
    cost: float
    grad_inf: float
    fixed_rows: int
    wall_time: float


@dataclass
class PlanResult:
    trajectory: spline.Trajectory6
    cost: float
    breakdown: CostBreakdown
    iterations: int
    wall_time: float
    converged: bool
    waypoint_errors: List[dict]
    limits: Dict[str, float]
    corridor: Corridor
    decision_vars: spline.DecisionVars
    constraints: List[WaypointConstraint]
    stages: List[StageStats] = field(default_factory=list)
    collision_free: Optional[bool] = None
    task: Dict[str, object] = field(default_factory=dict)
    grad_inf: float = 0.0
    corridor_violation: float = 0.0


def solve_stage(scenario: Scenario, corridor: Corridor, constraints, loose: bool,
                warm: spline.DecisionVars = None, name: str = "stage"):
    t0 = time.perf_counter()
    x0, objective, problem = assemble(scenario, corridor, constraints, warm)
    config = SolveConfig.from_settings(scenario.solver, loose=loose)
    result = minimize(objective, x0, config)
    stats = StageStats(name=name, iterations=result.iterations, converged=result.converged,
                       message=result.message, cost=float(result.f),
                       grad_inf=float(np.max(np.abs(result.g), initial=0.0)),
                       fixed_rows=int(problem.template.fixed.sum()),
                       wall_time=time.perf_counter() - t0)
    settings.log("L-BFGS", f"{name}: {result.iterations} it, J={result.f:.4g}, {result.message}")
    return result, problem, stats


def stage_violation(scenario: Scenario, problem: Problem, result: MinimizeResult) -> float:
    traj = spline.construct(problem.boundary, problem.unpack(result.x))
    return corridor_violation(sample_states(traj, scenario), traj, problem.corridor, scenario)


def tighten(scenario: Scenario, corridor: Corridor, constraints, result: MinimizeResult,
            problem: Problem, stages: List[StageStats]):
    """Re-solves with w_safety scaled by safety_growth while the volume still leaves the corridor."""
    rounds, growth = scenario.solver.safety_rounds, scenario.solver.safety_growth
    current = scenario
    for k in range(1, rounds + 1):
        excess = stage_violation(current, problem, result)
        if excess <= 0.0:
            break
        w = current.weights.w_safety * growth
        settings.log("L-BFGS", f"corridor excess {excess:.4f} m, w_safety -> {w:.3g}")
        current = current.model_copy(update={"weights": current.weights.model_copy(update={"w_safety": w})})
        result, problem, stats = solve_stage(current, corridor, constraints, loose=False,
                                             warm=problem.unpack(result.x), name=f"tighten-{k}")
        stages.append(stats)
    return result, problem, current


def finish_plan(scenario: Scenario, problem: Problem, result: MinimizeResult, stages, t0) -> PlanResult:
    J, grad, traj, breakdown = problem.evaluate(result.x)
    states = sample_states(traj, scenario)
    errors = waypoint_errors(traj, scenario, problem.constraints, problem.corridor.phi)
    return PlanResult(
        trajectory=traj, cost=float(J), breakdown=breakdown,
        iterations=sum(s.iterations for s in stages), wall_time=time.perf_counter() - t0,
        converged=result.converged, waypoint_errors=errors, limits=limit_maxima(states),
        corridor=problem.corridor, decision_vars=problem.unpack(result.x),
        constraints=problem.constraints, stages=stages,
        collision_free=collision_free(states, scenario),
        grad_inf=float(np.max(np.abs(grad), initial=0.0)),
        corridor_violation=corridor_violation(states, traj, problem.corridor, scenario),
    )


def reference_path(scenario: Scenario, constraints, grid: OccupancyGrid = None):
    grid = grid if grid is not None else rasterize(scenario)
    pts = [scenario.start.p_b] + [c.path_point(scenario.params) for c in constraints] + [scenario.goal.p_b]
    path, marks = search_path(grid, pts)
    return grid, path, marks


def plan_basic(scenario: Scenario) -> PlanResult:
    """rasterize -> search_path -> build_sfc -> assemble -> minimize -> tighten."""
    t0 = time.perf_counter()
    constraints = list(scenario.waypoints)
    grid, path, marks = reference_path(scenario, constraints)
    corridor = build_sfc(path, marks, constraints, grid, scenario.params, scenario.corridor)
    result, problem, stats = solve_stage(scenario, corridor, constraints, loose=False, name="basic")
    stages = [stats]
    result, problem, _ = tighten(scenario, corridor, constraints, result, problem, stages)
    plan = finish_plan(scenario, problem, result, stages, t0)
    settings.log("PLAN", f"{scenario.name}: J={plan.cost:.4g}, {plan.iterations} it, "
                         f"{plan.wall_time:.2f} s, collision-free={plan.collision_free}")
    return plan


# =====================================================================================
# EVALUATION
# =====================================================================================

def sample_states(traj: spline.Trajectory6, scenario: Scenario, dt: float = 0.01) -> Dict[str, np.ndarray]:
    params, f_ext = scenario.params, scenario.weights.f_ext
    total = traj.total_duration
    t = np.append(np.arange(0.0, total, dt), total)
    P = [spline.sample(traj, t, k) for k in range(4)]
    f = thrust_vectors(P[2][:, :3], params, f_ext)
    F = np.linalg.norm(f, axis=1)
    z = f / F[:, None]
    R = rotation_from_thrust(z)
    jerk = P[3][:, :3]
    z_dot = params.m_c * (jerk - z * np.sum(z * jerk, axis=1, keepdims=True)) / F[:, None]
    omega_x = -np.sum(R[:, :, 1] * z_dot, axis=1)
    omega_y = np.sum(R[:, :, 0] * z_dot, axis=1)
    q = P[0][:, 3:]
    return {
        "t": t, "p_b": P[0][:, :3], "v_b": P[1][:, :3], "a_b": P[2][:, :3], "j_b": jerk,
        "p_e": q, "v_e": P[1][:, 3:], "thrust": F, "omega_x": omega_x, "omega_y": omega_y,
        "h": np.maximum(params.p_B_in_D[2] - q[:, 2], params.r_e),
        "roll": np.degrees(np.arctan2(R[:, 2, 1], R[:, 2, 2])),
        "pitch": np.degrees(np.arcsin(np.clip(-R[:, 2, 0], -1.0, 1.0))),
        "R": R,
        "p_e_world": ee_world(P[0][:, :3], P[2][:, :3], q, params, f_ext),
    }


def limit_maxima(states: Dict[str, np.ndarray]) -> Dict[str, float]:
    return {
        "max_speed_body": float(np.max(np.linalg.norm(states["v_b"], axis=1))),
        "max_speed_ee": float(np.max(np.linalg.norm(states["v_e"], axis=1))),
        "max_bodyrate_xy": float(np.max(np.hypot(states["omega_x"], states["omega_y"]))),
        "min_thrust": float(np.min(states["thrust"])),
        "max_thrust": float(np.max(states["thrust"])),
        "min_h": float(np.min(states["h"])),
        "max_h": float(np.max(states["h"])),
        "duration": float(states["t"][-1]),
    }


def corridor_violation(states: Dict[str, np.ndarray], traj: spline.Trajectory6, corridor: Corridor,
                       scenario: Scenario) -> float:
    """Largest signed distance of the collision volume past its segment's polyhedron."""
    params = scenario.params
    seg = np.clip(np.searchsorted(traj.starts, states["t"], side="right") - 1, 0, traj.M - 1)
    if scenario.collision_model == "fixed-ellipsoid":
        h = np.full(len(seg), params.h_max)
    else:
        h = np.maximum(params.p_B_in_D[2] - states["p_e"][:, 2], params.r_e)
    z = states["R"][:, :, 2]
    r2 = params.r_e ** 2
    worst = -np.inf
    for i, poly in enumerate(corridor.polys):
        rows = seg == i
        if not np.any(rows):
            continue
        zn = z[rows] @ poly.A.T
        s = np.sqrt(r2 + (h[rows, None] ** 2 - r2) * zn ** 2)
        worst = max(worst, float(np.max(s + states["p_b"][rows] @ poly.A.T - poly.b)))
    return worst


def waypoint_errors(traj: spline.Trajectory6, scenario: Scenario, constraints, phi) -> List[dict]:
    params, f_ext = scenario.params, scenario.weights.f_ext
    out = []
    for lam, con in enumerate(constraints):
        j = phi[lam]
        t = traj.junction_time(j)
        x = [spline.eval(traj, t, k) for k in range(3)]
        entry = {"index": lam, "kind": con.kind, "label": con.label, "guide": con.guide,
                 "junction": int(j), "time": float(t)}
        if con.kind == "quadrotor":
            entry["position_error"] = float(np.linalg.norm(x[0][:3] - np.asarray(con.position)))
        else:
            p_e = ee_world(x[0][None, :3], x[2][None, :3], x[0][None, 3:], params, f_ext)[0]
            entry["position_error"] = float(np.linalg.norm(p_e - np.asarray(con.position)))
        if con.orientation is not None:
            f = thrust_vectors(x[2][:3], params, f_ext)
            cosang = np.clip(f @ np.asarray(con.orientation) / np.linalg.norm(f), -1.0, 1.0)
            entry["orientation_error_deg"] = float(np.degrees(np.arccos(cosang)))
        if con.velocity is not None:
            mask = np.asarray(con.velocity.mask, dtype=float)
            entry["velocity_error"] = float(np.linalg.norm(mask * (x[1][3:] - np.asarray(con.velocity.value))))
        out.append(entry)
    return out


def robot_points(states: Dict[str, np.ndarray], scenario: Scenario, n_rim: int = 8, n_arm: int = 8) -> np.ndarray:
    """Body disk rim plus arm segment samples, shape (T, n_rim + n_arm + 1, 3)."""
    params = scenario.params
    R, p_b = states["R"], states["p_b"]
    ang = np.linspace(0.0, 2.0 * np.pi, n_rim, endpoint=False)
    rim_body = params.r_e * np.stack([np.cos(ang), np.sin(ang), np.zeros(n_rim)], axis=1)
    rim = p_b[:, None, :] + np.einsum("tij,kj->tki", R, rim_body)
    base = p_b + R @ np.asarray(params.p_D_in_B)
    s = np.linspace(0.0, 1.0, n_arm)
    arm = base[:, None, :] + s[None, :, None] * (states["p_e_world"] - base)[:, None, :]
    return np.concatenate([p_b[:, None, :], rim, arm], axis=1)


def collision_free(states: Dict[str, np.ndarray], scenario: Scenario) -> bool:
    if not scenario.obstacles:
        return True
    return not bool(np.any(point_in_obstacles(scenario, robot_points(states, scenario))))
