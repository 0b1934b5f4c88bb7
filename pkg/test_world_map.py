import numpy as np
import pytest
from pydantic import ValidationError
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from errors import NoPath
from world_map import (
    BoxObstacle,
    NEIGHBORS,
    STEP_COST,
    EndpointState,
    OccupancyGrid,
    Scenario,
    SlabObstacle,
    astar,
    clearance_ok,
    grid_padding,
    line_of_sight,
    octile,
    path_length,
    point_in_obstacles,
    rasterize,
    search_path,
)


def test_padding_rounds_radius_up_to_voxels(open_scene):
    assert grid_padding(open_scene) == pytest.approx(0.2)
    grid = rasterize(open_scene)
    assert grid.shape == (44, 24, 24)
    assert not grid.occupied.any()


def test_pillar_is_rasterized(pillar_scene):
    grid = rasterize(pillar_scene)
    assert not grid.is_free((0.0, 0.0, 1.0))
    assert grid.is_free((-1.5, 0.0, 1.0))
    assert not line_of_sight(grid, (-1.5, 0.0, 1.0), (1.5, 0.0, 1.0))
    assert line_of_sight(grid, (-1.5, 0.0, 1.0), (-0.5, 0.5, 1.0))


def test_astar_is_octile_optimal_in_free_space(open_scene):
    grid = rasterize(open_scene)
    a, b = (2, 3, 4), (12, 7, 5)
    path = astar(grid, a, b)
    assert path[0] == a and path[-1] == b
    cost = sum(np.linalg.norm(np.subtract(p, q)) for p, q in zip(path[:-1], path[1:]))
    assert cost == pytest.approx(octile(a, b))


def test_search_path_marks_ordered_points(pillar_scene):
    grid = rasterize(pillar_scene)
    pts = [(-1.5, 0.0, 1.0), (0.0, 0.6, 1.0), (1.5, 0.0, 1.0)]
    path, marks = search_path(grid, pts)
    assert len(marks) == 3
    for m, p in zip(marks, pts):
        assert np.allclose(path[m], p)
    assert path_length(path) > 3.0
    assert not point_in_obstacles(pillar_scene, path).any()


def test_walled_off_goal_has_no_path():
    scene = Scenario(
        bounds_lo=(-2.0, -1.0, 0.0), bounds_hi=(2.0, 1.0, 2.0), resolution=0.1,
        obstacles=[BoxObstacle(center=(0.0, 0.0, 1.0), half_extents=(0.1, 2.0, 2.0))],
        start=EndpointState(p_b=(-1.5, 0.0, 1.0)), goal=EndpointState(p_b=(1.5, 0.0, 1.0)),
    )
    grid = rasterize(scene)
    with pytest.raises(NoPath):
        search_path(grid, [scene.start.p_b, scene.goal.p_b])


def test_slab_membership():
    slab = SlabObstacle(point=(0.0, 0.0, 1.0), normal=(0.0, 0.0, 1.0), half_extents=(0.5, 0.5), thickness=0.1)
    scene = Scenario(bounds_lo=(-2, -2, 0), bounds_hi=(2, 2, 2), obstacles=[slab],
                     start=EndpointState(p_b=(-1.5, 0.0, 1.0)), goal=EndpointState(p_b=(1.5, 0.0, 1.0)))
    hits = point_in_obstacles(scene, np.array([[0.0, 0.0, 1.04], [0.0, 0.0, 1.06], [0.6, 0.0, 1.0]]))
    assert hits.tolist() == [True, False, False]
    assert not clearance_ok(scene, (0.0, 0.0, 1.1), 0.15)


def test_scenario_validation():
    base = dict(bounds_lo=(-2, -1, 0), bounds_hi=(2, 1, 2), start=EndpointState(p_b=(-1.5, 0, 1)),
                goal=EndpointState(p_b=(1.5, 0, 1)))
    with pytest.raises(ValidationError):
        Scenario(**{**base, "bounds_hi": (-3, 1, 2)})
    with pytest.raises(ValidationError):
        Scenario(**{**base, "resolution": 0.0})
    with pytest.raises(ValidationError):
        Scenario(**{**base, "obstacles": [BoxObstacle(center=(-1.5, 0.0, 1.1), half_extents=(0.1, 0.1, 0.05))]})
    with pytest.raises(ValidationError):
        Scenario(**{**base, "task_index": 0})


def _random_grid(seed, n=32, density=0.3):
    rng = np.random.default_rng(seed)
    occupied = rng.random((n, n, n)) < density
    start, goal = (1, 1, 1), (n - 2, n - 3, n - 2)
    occupied[start] = occupied[goal] = False
    return OccupancyGrid(origin=np.zeros(3), resolution=1.0, occupied=occupied), start, goal


def _dijkstra_cost(grid, start, goal):
    shape = grid.shape
    free = ~grid.occupied
    ids = np.arange(free.size).reshape(shape)
    rows, cols, costs = [], [], []
    for d in NEIGHBORS:
        src = tuple(slice(max(0, -k), s - max(0, k)) for k, s in zip(d, shape))
        dst = tuple(slice(max(0, k), s - max(0, -k)) for k, s in zip(d, shape))
        both = free[src] & free[dst]
        rows.append(ids[src][both])
        cols.append(ids[dst][both])
        costs.append(np.full(int(both.sum()), STEP_COST[d]))
    graph = coo_matrix((np.concatenate(costs), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(free.size, free.size)).tocsr()
    dist = dijkstra(graph, indices=int(ids[start]))
    return float(dist[ids[goal]])


@pytest.mark.parametrize("seed", range(30))
def test_astar_cost_matches_dijkstra(seed):
    grid, start, goal = _random_grid(seed)
    oracle = _dijkstra_cost(grid, start, goal)
    if not np.isfinite(oracle):
        with pytest.raises(NoPath):
            astar(grid, start, goal)
        return
    cells = astar(grid, start, goal)
    assert cells[0] == start and cells[-1] == goal
    steps = [tuple(int(x) for x in np.subtract(b, a)) for a, b in zip(cells[:-1], cells[1:])]
    assert all(s in STEP_COST for s in steps)
    assert all(grid.is_free_index(c) for c in cells)
    assert sum(STEP_COST[s] for s in steps) == pytest.approx(oracle, abs=1e-9)


def test_astar_ties_are_deterministic():
    grid = OccupancyGrid(origin=np.zeros(3), resolution=1.0, occupied=np.zeros((12, 12, 12), dtype=bool))
    first = astar(grid, (0, 0, 0), (7, 3, 0))
    assert first == astar(grid, (0, 0, 0), (7, 3, 0))
    copy = OccupancyGrid(origin=np.zeros(3), resolution=1.0, occupied=grid.occupied.copy())
    assert first == astar(copy, (0, 0, 0), (7, 3, 0))
    assert len(first) == 8
    grid2, start, goal = _random_grid(5)
    assert astar(grid2, start, goal) == astar(grid2, start, goal)
