import os

os.environ.setdefault("AM_PLANNER_QUIET", "1")
os.environ.setdefault("AM_PLANNER_THREADS", "2")

import pytest  # noqa: E402

from world_map import BoxObstacle, EndpointState, Scenario  # noqa: E402


@pytest.fixture
def open_scene():
    """Empty 4 m x 2 m x 2 m room, hover to hover."""
    return Scenario(
        name="open",
        bounds_lo=(-2.0, -1.0, 0.0), bounds_hi=(2.0, 1.0, 2.0), resolution=0.1,
        start=EndpointState(p_b=(-1.5, 0.0, 1.0)),
        goal=EndpointState(p_b=(1.5, 0.0, 1.0)),
    )


@pytest.fixture
def pillar_scene():
    """Same room with a pillar between start and goal."""
    return Scenario(
        name="pillar",
        bounds_lo=(-2.0, -1.0, 0.0), bounds_hi=(2.0, 1.0, 2.0), resolution=0.1,
        obstacles=[BoxObstacle(center=(0.0, 0.0, 1.0), half_extents=(0.2, 0.2, 1.0))],
        start=EndpointState(p_b=(-1.5, 0.0, 1.0)),
        goal=EndpointState(p_b=(1.5, 0.0, 1.0)),
    )
