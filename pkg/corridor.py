# File: corridor.py
# Version: 1.5 (segment-seeded polyhedra + active pairs around constrained waypoints)
"""
Safe flight corridor: an ordered chain of overlapping convex polyhedra {x | A x <= b}
covering the reference path. Constrained waypoints get a dedicated pair of polyhedra
whose shared junction becomes the intermediate point carrying that constraint.
"""
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

import settings
from core_model import AmParams, E1, E3
from errors import CorridorGap, DegenerateDirection, SeedBlocked
from world_map import CorridorConfig, OccupancyGrid, Scenario, line_of_sight, point_in_obstacles

STRICT_MARGIN = 1e-6


@dataclass(frozen=True)
class Polyhedron:
    A: np.ndarray       # (K, 3) outward unit normals
    b: np.ndarray       # (K,)

    def contains(self, p, margin: float = 0.0) -> bool:
        return bool(np.all(self.A @ np.asarray(p, dtype=float) <= self.b - margin))

    def contains_many(self, pts, margin: float = 0.0) -> np.ndarray:
        return np.all(np.asarray(pts) @ self.A.T <= self.b - margin, axis=-1)

    @property
    def halfplanes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(outward normal, point on plane) pairs."""
        return [(a, a * bk) for a, bk in zip(self.A, self.b)]


@dataclass
class Corridor:
    polys: List[Polyhedron]
    phi: Dict[int, int] = field(default_factory=dict)
    jumps: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    path: Optional[np.ndarray] = None

    @property
    def M(self) -> int:
        return len(self.polys)


# =====================================================================================
# LP HELPERS
# =====================================================================================

def chebyshev_center(polys: Sequence[Polyhedron], r_max: float = 1.0):
    """Center and radius of the largest ball inside the intersection (radius capped at r_max)."""
    A = np.vstack([p.A for p in polys])
    b = np.concatenate([p.b for p in polys])
    norms = np.linalg.norm(A, axis=1)
    res = linprog(
        c=[0.0, 0.0, 0.0, -1.0],
        A_ub=np.hstack([A, norms[:, None]]),
        b_ub=b,
        bounds=[(None, None)] * 3 + [(0.0, r_max)],
        method="highs",
    )
    if res.status != 0:
        return None, -1.0
    return res.x[:3], float(res.x[3])


def intersection_nonempty(p1: Polyhedron, p2: Polyhedron, tol: float = 1e-9) -> bool:
    _, r = chebyshev_center([p1, p2])
    return r > tol


# =====================================================================================
# POLYHEDRON GENERATION
# =====================================================================================

def _segment_frame(d: np.ndarray, up: Optional[np.ndarray]) -> np.ndarray:
    """Columns: segment axis, lateral axis, 'up' axis (surface normal when given)."""
    up = E3 if up is None else np.asarray(up, dtype=float)
    if abs(up @ d) > 0.99:
        up = E1 if abs(d @ E1) < 0.9 else E3
    e_b = up - (up @ d) * d
    e_b /= np.linalg.norm(e_b)
    e_a = np.cross(e_b, d)
    return np.column_stack([d, e_a, e_b])


def _box_planes(center, R, half):
    A = np.vstack([R.T, -R.T])
    b = np.concatenate([R.T @ center + half, -(R.T @ center) + half])
    return A, b


def _map_planes(grid: OccupancyGrid, center, R, half):
    """Faces of the map box that the local box pokes through."""
    signs = np.array(list(np.ndindex(2, 2, 2)), dtype=float) * 2.0 - 1.0
    corners = center + (signs * half) @ R.T
    A, b = [], []
    for k in range(3):
        e = np.eye(3)[k]
        if np.any(corners[:, k] > grid.upper[k]):
            A.append(e)
            b.append(grid.upper[k])
        if np.any(corners[:, k] < grid.origin[k]):
            A.append(-e)
            b.append(-grid.origin[k])
    return np.array(A).reshape(-1, 3), np.array(b)


def generate_poly(segment, grid: OccupancyGrid, bbox_halfsize=(2.0, 1.0, 1.0),
                  up=None, voxel_inflation: bool = True) -> Polyhedron:
    """Ellipsoid-seeded convex region around a free segment inside a local oriented box."""
    a, b = (np.asarray(p, dtype=float) for p in segment)
    res = grid.resolution
    if not (grid.is_free(a) and grid.is_free(b)) or not line_of_sight(grid, a, b):
        raise SeedBlocked(f"segment {a.round(3).tolist()} -> {b.round(3).tolist()} crosses occupied voxels")

    L = float(np.linalg.norm(b - a))
    d = (b - a) / L if L > 1e-9 else E1
    R = _segment_frame(d, up)
    m = 0.5 * (a + b)
    half = np.array([max(bbox_halfsize[0], 0.5 * L + res), bbox_halfsize[1], bbox_halfsize[2]])

    # occupied centers inside the local box
    occ = grid.occupied_centers
    if len(occ):
        reach = np.abs(R) @ half + res
        occ = occ[np.all(np.abs(occ - m) <= reach, axis=1)]
        local = (occ - m) @ R
        occ = occ[np.all(np.abs(local) <= half + res, axis=1)]

    # ellipsoid: major axis along the segment, lateral axes shrunk until empty
    ax = 0.5 * L + 0.25 * res
    lat = ax
    if len(occ):
        local = (occ - m) @ R
        inside = np.abs(local[:, 0]) < ax
        if np.any(inside):
            l_in = local[inside]
            need = (l_in[:, 1] ** 2 + l_in[:, 2] ** 2) / (1.0 - (l_in[:, 0] / ax) ** 2)
            lat = min(lat, float(np.sqrt(np.min(need))))
    if lat < 1e-6:
        raise SeedBlocked("occupied voxel center on the seed segment")
    shape = R @ np.diag([1.0 / ax ** 2, 1.0 / lat ** 2, 1.0 / lat ** 2]) @ R.T

    cuts_A, cuts_b = [], []
    remaining = occ
    while len(remaining):
        rel = remaining - m
        dist2 = np.einsum("ni,ij,nj->n", rel, shape, rel)
        k = int(np.argmin(dist2))
        p = remaining[k]
        n = shape @ (p - m)
        n /= np.linalg.norm(n)
        offset = float(n @ p)
        if voxel_inflation:
            slack = offset - max(n @ a, n @ b)
            offset -= min(0.5 * res * float(np.sum(np.abs(n))), 0.5 * slack)
        cuts_A.append(n)
        cuts_b.append(offset)
        remaining = remaining[remaining @ n < offset]

    A_box, b_box = _box_planes(m, R, half)
    A_map, b_map = _map_planes(grid, m, R, half)
    A = np.vstack([np.array(cuts_A).reshape(-1, 3), A_box, A_map])
    bb = np.concatenate([np.array(cuts_b), b_box, b_map])
    return Polyhedron(A=A, b=bb)


# =====================================================================================
# ACTIVE GENERATION
# =====================================================================================

def _first_inside(poly: Polyhedron, path) -> int:
    inside = np.flatnonzero(poly.contains_many(path, STRICT_MARGIN))
    return int(inside[0]) if len(inside) else -1


def _last_inside(poly: Polyhedron, path) -> int:
    inside = np.flatnonzero(poly.contains_many(path, STRICT_MARGIN))
    return int(inside[-1]) if len(inside) else -1


def active_generate(w, w_point, path, w_index: int, grid: OccupancyGrid,
                    cfg: CorridorConfig = None):
    """
    Two polyhedra seeded from the constrained waypoint toward where the path comes
    from and where it goes, both lying in the plane through w parallel to the surface.
    Returns (P1, P2, jump1, jump2, p1_ext, p2_ext).
    """
    cfg = cfg or CorridorConfig()
    path = np.asarray(path, dtype=float)
    wp = np.asarray(w_point, dtype=float)
    normal = E3 if w.surface is None else np.asarray(w.surface.normal, dtype=float)

    before = path[max(0, w_index - cfg.n_avg):w_index]
    after = path[w_index + 1:w_index + 1 + cfg.n_avg]
    ext = []
    for name, chunk in (("incoming", before), ("outgoing", after)):
        if len(chunk) == 0:
            raise DegenerateDirection(f"no {name} path points around the constrained waypoint")
        p_avg = chunk.mean(axis=0)
        proj = p_avg - ((p_avg - wp) @ normal) * normal
        d = proj - wp
        if np.linalg.norm(d) < 1e-6:
            raise DegenerateDirection(f"{name} direction is along the surface normal")
        ext.append(wp + cfg.r_p * d / np.linalg.norm(d))

    half = (cfg.bbox_along, cfg.bbox_lateral, cfg.bbox_lateral)
    P1 = generate_poly((wp, ext[0]), grid, half, up=normal, voxel_inflation=cfg.voxel_inflation)
    P2 = generate_poly((wp, ext[1]), grid, half, up=normal, voxel_inflation=cfg.voxel_inflation)
    return P1, P2, _first_inside(P1, path), _last_inside(P2, path), ext[0], ext[1]


# =====================================================================================
# ASSEMBLY
# =====================================================================================

def _run_end(poly: Polyhedron, path, start: int, cap: int) -> int:
    """Last index of the contiguous run of path points inside poly starting at `start`."""
    idx = start
    while idx + 1 <= cap and poly.contains(path[idx + 1], STRICT_MARGIN):
        idx += 1
    return idx


def _pair_entry(P1: Polyhedron, P2: Polyhedron, path, k: int) -> int:
    """Smallest index from which every path point up to the waypoint k lies in P1 or P2."""
    covered = P1.contains_many(path[:k + 1]) | P2.contains_many(path[:k + 1])
    e = k
    while e > 0 and covered[e - 1]:
        e -= 1
    return e


def build_sfc(path, marks: Sequence[int], constraints, grid: OccupancyGrid, params: AmParams,
              cfg: CorridorConfig = None) -> Corridor:
    """
    Walk the path emitting polyhedra. A polyhedron ends at the farthest visible point
    within cfg.farthest_distance and is shortened until it covers every path point it
    spans; reaching a point of a queued constrained pair from which the rest of the way
    to the waypoint stays inside the pair splices that pair in, bridged by an extra
    polyhedron when needed.
    marks[lam + 1] is the path index of constraint lam.
    """
    cfg = cfg or CorridorConfig()
    path = np.asarray(path, dtype=float)
    n = len(path)
    half = (cfg.bbox_along, cfg.bbox_lateral, cfg.bbox_lateral)

    def gen(i, j):
        return generate_poly((path[i], path[j]), grid, half, voxel_inflation=cfg.voxel_inflation)

    def cover(i, j):
        """Polyhedron seeded on path[i] -> path[j], j lowered until path[i..j] is inside."""
        while True:
            poly = gen(i, j)
            inside = poly.contains_many(path[i:j + 1], STRICT_MARGIN)
            if inside.all() or j == i + 1:
                return poly, j
            j = max(i + 1, i + int(np.argmin(inside)) - 1)

    def farthest(i, j, stop):
        if j >= stop:
            return True
        nxt = path[j + 1]
        return (np.linalg.norm(nxt - path[i]) > cfg.farthest_distance
                or not line_of_sight(grid, path[i], nxt))

    polys: List[Polyhedron] = []
    phi: Dict[int, int] = {}
    jumps: Dict[int, Tuple[int, int]] = {}

    if n == 1:
        polys.append(gen(0, 0))
        return _checked(Corridor(polys=polys, path=path), constraints, marks)

    queue = deque()
    for lam, con in enumerate(constraints):
        k = marks[lam + 1]
        if cfg.active:
            P1, P2, j1, j2, _, _ = active_generate(con, path[k], path, k, grid, cfg)
            jumps[lam] = (j1, j2)
            queue.append((lam, k, P1, P2, _pair_entry(P1, P2, path, k)))
        else:
            queue.append((lam, k, None, None, k))
    settings.log("SFC", f"{len(queue)} constrained waypoint(s), active generation {'on' if cfg.active else 'off'}")

    def splice():
        lam, k, P1, P2, _ = queue.popleft()
        polys.append(P1)
        phi[lam] = len(polys) - 1
        polys.append(P2)
        cap = queue[0][1] - 1 if queue else n - 1
        return _run_end(P2, path, k, max(cap, k))

    def enters_pair(head, j):
        return head[4] <= j and head[2].contains(path[j], STRICT_MARGIN)

    i = 0
    while i < n - 1:
        head = queue[0] if queue else None
        if head and cfg.active and enters_pair(head, i):
            i = splice()
            continue
        stop = head[1] if (head and not cfg.active) else n - 1
        cap = head[1] - 1 if head else n - 1
        for j in range(i + 1, n):
            if head and cfg.active and enters_pair(head, j):
                bridge, end = cover(i, j)
                polys.append(bridge)
                i = splice() if end == j else _run_end(bridge, path, end, max(cap, end))
                break
            if farthest(i, j, stop):
                poly, end = cover(i, j)
                polys.append(poly)
                if head and not cfg.active and end == head[1]:
                    phi[queue.popleft()[0]] = len(polys) - 1
                    i = end
                else:
                    i = _run_end(poly, path, end, max(cap, end))
                break

    if queue:
        raise CorridorGap(f"constraint {queue[0][0]} was never spliced into the corridor")
    corridor = Corridor(polys=polys, phi=phi, jumps=jumps, path=path)
    settings.log("SFC", f"corridor with {corridor.M} polyhedra")
    return _checked(corridor, constraints, marks)


def _checked(corridor: Corridor, constraints, marks) -> Corridor:
    for i, (p1, p2) in enumerate(zip(corridor.polys[:-1], corridor.polys[1:])):
        if not intersection_nonempty(p1, p2):
            raise CorridorGap(f"polyhedra {i} and {i + 1} do not overlap")
    covered = np.zeros(len(corridor.path), dtype=bool)
    for poly in corridor.polys:
        covered |= poly.contains_many(corridor.path)
    if not covered.all():
        raise CorridorGap(f"path points {np.flatnonzero(~covered).tolist()} lie outside every polyhedron")
    for lam, j in corridor.phi.items():
        w = corridor.path[marks[lam + 1]]
        if not (corridor.polys[j].contains(w, STRICT_MARGIN) and corridor.polys[j + 1].contains(w, STRICT_MARGIN)):
            raise CorridorGap(f"constraint {lam} not strictly inside its junction polyhedra")
    return corridor



# =====================================================================================
# METRICS / EXPORT
# =====================================================================================

def utilization_rate(corridor: Corridor, scenario: Scenario, center, radius: float = 0.5,
                     n: int = 4000, seed: int = 0) -> float:
    """Fraction of free space in a ball around `center` covered by the corridor."""
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.asarray(center) + dirs * radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)
    lo, hi = np.asarray(scenario.bounds_lo), np.asarray(scenario.bounds_hi)
    free = ~point_in_obstacles(scenario, pts) & np.all((pts >= lo) & (pts <= hi), axis=1)
    if not np.any(free):
        return 0.0
    covered = np.zeros(n, dtype=bool)
    for poly in corridor.polys:
        covered |= poly.contains_many(pts)
    return float(np.sum(covered & free) / np.sum(free))


def corridor_to_dict(corridor: Corridor) -> dict:
    return {
        "polyhedra": [{"normals": p.A.tolist(), "offsets": p.b.tolist()} for p in corridor.polys],
        "phi": {str(k): int(v) for k, v in sorted(corridor.phi.items())},
    }


def corridor_from_dict(data: dict) -> Corridor:
    polys = [Polyhedron(A=np.array(p["normals"], dtype=float).reshape(-1, 3),
                        b=np.array(p["offsets"], dtype=float)) for p in data["polyhedra"]]
    return Corridor(polys=polys, phi={int(k): int(v) for k, v in data.get("phi", {}).items()})
