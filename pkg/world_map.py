# File: world_map.py
# Version: 1.3 (scenario schema + voxel grid + multi-stage A*)

import heapq
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import ceil, sqrt
from typing import Annotated, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

import settings
import spline
from core_model import AmParams, CollisionModel
from costs import SegmentMotionConstraint, WaypointConstraint, Weights
from errors import NoPath

Vec3 = Tuple[float, float, float]
ZERO3 = (0.0, 0.0, 0.0)


# =====================================================================================
# SCENARIO SCHEMA
# =====================================================================================

class BoxObstacle(BaseModel):
    kind: Literal["box"] = "box"
    center: Vec3
    half_extents: Vec3


class SlabObstacle(BaseModel):
    """Finite plate: |offset . n| <= thickness/2 and in-plane |u|, |v| within half_extents."""
    kind: Literal["slab"] = "slab"
    point: Vec3
    normal: Vec3
    half_extents: Tuple[float, float]
    thickness: float


Obstacle = Annotated[Union[BoxObstacle, SlabObstacle], Field(discriminator="kind")]


class EndpointState(BaseModel):
    p_b: Vec3
    p_e: Vec3 = (0.0, 0.0, -0.13)
    v_b: Vec3 = ZERO3
    a_b: Vec3 = ZERO3
    v_e: Vec3 = ZERO3
    a_e: Vec3 = ZERO3

    def to_boundary(self) -> spline.BoundaryState:
        return spline.BoundaryState(
            pos=np.array(self.p_b + self.p_e, dtype=float),
            vel=np.array(self.v_b + self.v_e, dtype=float),
            acc=np.array(self.a_b + self.a_e, dtype=float),
        )


class CorridorConfig(BaseModel):
    active: bool = True
    farthest_distance: float = 1.5
    n_avg: int = 10
    r_p: float = 0.3
    bbox_along: float = 2.0
    bbox_lateral: float = 1.0
    voxel_inflation: bool = True

    @classmethod
    def from_config(cls) -> "CorridorConfig":
        return cls(**settings.section("corridor"))


class SolverSettings(BaseModel):
    eps_strict: float = 1e-5
    eps_loose: float = 1e-2
    relative: bool = True
    max_iters: int = 400
    memory: int = 8
    c1: float = 1e-4
    c2: float = 0.9
    safety_rounds: int = 3
    safety_growth: float = 10.0

    @classmethod
    def from_config(cls) -> "SolverSettings":
        return cls(**settings.section("solver"))


class Scenario(BaseModel):
    name: str = "scenario"
    bounds_lo: Vec3
    bounds_hi: Vec3
    resolution: float = 0.1
    obstacles: List[Obstacle] = []
    start: EndpointState
    goal: EndpointState
    waypoints: List[WaypointConstraint] = []
    motions: List[SegmentMotionConstraint] = []
    params: AmParams = Field(default_factory=AmParams.from_config)
    weights: Weights = Field(default_factory=Weights.from_config)
    solver: SolverSettings = Field(default_factory=SolverSettings.from_config)
    corridor: CorridorConfig = Field(default_factory=CorridorConfig.from_config)
    collision_model: CollisionModel = "varying-ellipsoid"
    task_index: Optional[int] = None
    k_guide: int = 2
    seed: int = 0

    @model_validator(mode="after")
    def check_invariants(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if not all(lo < hi for lo, hi in zip(self.bounds_lo, self.bounds_hi)):
            raise ValueError("bounds_lo must be below bounds_hi")
        for name, ep in (("start", self.start), ("goal", self.goal)):
            if not clearance_ok(self, ep.p_b, self.params.r_e):
                raise ValueError(f"{name} position lacks clearance r_e from obstacles")
        if self.task_index is not None and not 0 <= self.task_index < len(self.waypoints):
            raise ValueError("task_index out of range")
        return self

    def boundary(self):
        return self.start.to_boundary(), self.goal.to_boundary()


# =====================================================================================
# GEOMETRY
# =====================================================================================

def in_plane_axes(normal) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(a, n)
    u /= np.linalg.norm(u)
    return n, u, np.cross(n, u)


def inside_obstacle(obs, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if obs.kind == "box":
        return np.all(np.abs(pts - np.asarray(obs.center)) <= np.asarray(obs.half_extents), axis=-1)
    n, u, v = in_plane_axes(obs.normal)
    d = pts - np.asarray(obs.point)
    return ((np.abs(d @ n) <= 0.5 * obs.thickness)
            & (np.abs(d @ u) <= obs.half_extents[0])
            & (np.abs(d @ v) <= obs.half_extents[1]))


def point_in_obstacles(scenario: Scenario, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    hit = np.zeros(pts.shape[:-1], dtype=bool)
    for obs in scenario.obstacles:
        hit |= inside_obstacle(obs, pts)
    return hit


def _sphere_directions(n_ring: int = 8) -> np.ndarray:
    dirs = [(0.0, 0.0, 1.0), (0.0, 0.0, -1.0)]
    for el in (-np.pi / 4, 0.0, np.pi / 4):
        for az in np.linspace(0.0, 2.0 * np.pi, n_ring, endpoint=False):
            dirs.append((np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)))
    return np.array(dirs)


def clearance_ok(scenario, p, radius: float) -> bool:
    p = np.asarray(p, dtype=float)
    pts = np.vstack([p[None], p + radius * _sphere_directions()])
    hit = np.zeros(len(pts), dtype=bool)
    for obs in scenario.obstacles:
        hit |= inside_obstacle(obs, pts)
    return not bool(np.any(hit))


# =====================================================================================
# OCCUPANCY GRID
# =====================================================================================

@dataclass(frozen=True)
class OccupancyGrid:
    origin: np.ndarray
    resolution: float
    occupied: np.ndarray        # bool (nx, ny, nz)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.occupied.shape

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.resolution * np.asarray(self.shape)

    def index_of(self, p) -> Tuple[int, ...]:
        idx = np.floor((np.asarray(p, dtype=float) - self.origin) / self.resolution)
        return tuple(int(i) for i in idx)

    def indices_of(self, pts) -> np.ndarray:
        return np.floor((np.asarray(pts, dtype=float) - self.origin) / self.resolution).astype(int)

    def center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.resolution

    def in_grid(self, idx) -> bool:
        return all(0 <= i < n for i, n in zip(idx, self.shape))

    def is_free_index(self, idx) -> bool:
        return self.in_grid(idx) and not self.occupied[idx]

    def is_free(self, p) -> bool:
        return self.is_free_index(self.index_of(p))

    @cached_property
    def occupied_centers(self) -> np.ndarray:
        return self.center(np.argwhere(self.occupied))


def grid_padding(scenario: Scenario) -> float:
    res = scenario.resolution
    return ceil((scenario.params.r_e + scenario.params.d_s) / res - 1e-9) * res


def rasterize(scenario: Scenario) -> OccupancyGrid:
    res = scenario.resolution
    pad = grid_padding(scenario)
    origin = np.asarray(scenario.bounds_lo, dtype=float) - pad
    span = np.asarray(scenario.bounds_hi, dtype=float) - np.asarray(scenario.bounds_lo) + 2 * pad
    shape = tuple(int(ceil(s / res - 1e-9)) for s in span)
    axes = [origin[k] + (np.arange(shape[k]) + 0.5) * res for k in range(3)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    occupied = np.zeros(shape, dtype=bool)
    for obs in scenario.obstacles:
        occupied |= inside_obstacle(obs, centers)
    settings.log("MAP", f"grid {shape} @ {res} m, {int(occupied.sum())} occupied voxels")
    return OccupancyGrid(origin=origin, resolution=res, occupied=occupied)


def line_of_sight(grid: OccupancyGrid, a, b) -> bool:
    """All samples of segment a-b fall in free voxels."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    n = max(2, int(ceil(np.linalg.norm(b - a) / (0.25 * grid.resolution))))
    n += n % 2
    ts = (np.arange(n) + 0.5) / n
    idx = grid.indices_of(a + ts[:, None] * (b - a))
    shape = np.asarray(grid.shape)
    if np.any(idx < 0) or np.any(idx >= shape):
        return False
    return not bool(np.any(grid.occupied[idx[:, 0], idx[:, 1], idx[:, 2]]))


# =====================================================================================
# A* SEARCH
# =====================================================================================

NEIGHBORS = [d for d in product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
STEP_COST = {d: sqrt(sum(c * c for c in d)) for d in NEIGHBORS}
SQRT2, SQRT3 = sqrt(2.0), sqrt(3.0)


def octile(a, b) -> float:
    d = sorted((abs(x - y) for x, y in zip(a, b)), reverse=True)
    return (d[0] - d[1]) + SQRT2 * (d[1] - d[2]) + SQRT3 * d[2]


def neighbors(grid: OccupancyGrid, idx):
    for d in NEIGHBORS:
        nxt = (idx[0] + d[0], idx[1] + d[1], idx[2] + d[2])
        if grid.is_free_index(nxt):
            yield nxt, STEP_COST[d]


def astar(grid: OccupancyGrid, start_idx, goal_idx) -> List[Tuple[int, int, int]]:
    """Grid-optimal 26-connected path; ties broken on smaller h, then lexicographic index."""
    start_idx, goal_idx = tuple(start_idx), tuple(goal_idx)
    g = {start_idx: 0.0}
    parent = {start_idx: None}
    h0 = octile(start_idx, goal_idx)
    heap = [(h0, h0, start_idx)]
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal_idx:
            path = []
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return path[::-1]
        closed.add(cur)
        for nxt, step in neighbors(grid, cur):
            if nxt in closed:
                continue
            cand = g[cur] + step
            if cand < g.get(nxt, np.inf) - 1e-12:
                g[nxt] = cand
                parent[nxt] = cur
                h = octile(nxt, goal_idx)
                heapq.heappush(heap, (cand + h, h, nxt))
    raise NoPath(f"no path from voxel {start_idx} to {goal_idx}")


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1))) if len(pts) > 1 else 0.0


def search_path(grid: OccupancyGrid, ordered_points: Sequence) -> Tuple[np.ndarray, List[int]]:
    """
    Concatenated per-leg A* paths through the ordered points.
    Interior points are voxel centers; each leg starts and ends at the exact ordered point.
    Returns the polyline and the index of every ordered point in it.
    """
    pts = [np.asarray(p, dtype=float) for p in ordered_points]
    for k, p in enumerate(pts):
        if not grid.is_free(p):
            raise NoPath(f"ordered point {k} {p.round(3).tolist()} is not in a free voxel")

    polyline = [pts[0]]
    marks = [0]
    for leg, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        cells = astar(grid, grid.index_of(a), grid.index_of(b))
        inner = [grid.center(c) for c in cells[1:-1]]
        if len(cells) > 1 or np.linalg.norm(b - a) > 1e-12:
            polyline.extend(inner)
            polyline.append(b)
        marks.append(len(polyline) - 1)
    settings.log("MAP", f"path with {len(polyline)} points, length {path_length(polyline):.2f} m")
    return np.array(polyline), marks
