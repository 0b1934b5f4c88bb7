import numpy as np
import pytest
from pydantic import ValidationError

import spline
from core_model import AmParams
from corridor import Polyhedron
from costs import (
    CostProblem,
    SegmentMotionConstraint,
    VelocitySpec,
    WaypointConstraint,
    Weights,
    K,
    dK,
    cost_axis_motion,
    cost_bodyrate,
    cost_ee_waypoint,
    cost_orientation,
    cost_safety,
    cost_smooth_time,
    cost_thrust,
    cost_velocity,
    cost_velocity_cons,
    cost_workspace,
    ee_world,
    total_cost,
)


def _box(lo, hi):
    A = np.vstack([np.eye(3), -np.eye(3)])
    b = np.concatenate([np.asarray(hi, float), -np.asarray(lo, float)])
    return Polyhedron(A=A, b=b)


def _setup():
    params = AmParams(v_b_max=1.0, omega_xy_max=1.0)
    weights = Weights(w_safety=10.0, w_workspace=10.0, w_vel=10.0, w_bodyrate=10.0, w_thrust=1e-3,
                      w_ee_waypoint=100.0, w_axis=10.0, w_vel_cons=10.0, w_orient=1.0, N=8)
    start = spline.BoundaryState.at_rest((0.0, 0.0, 1.0), (0.0, 0.0, -0.13))
    goal = spline.BoundaryState.at_rest((2.0, 0.5, 1.1), (0.0, 0.0, -0.13))
    dv = spline.DecisionVars(P=[[0.6, 0.1, 1.05], [1.4, 0.4, 1.1]],
                             Q=[[0.03, -0.01, -0.18], [0.0, 0.05, -0.12]],
                             tau=np.log([0.7, 0.9, 0.8]))
    polys = [_box((-0.2, -0.3, 0.8), (0.8, 0.3, 1.2)),
             _box((0.4, -0.2, 0.85), (1.6, 0.6, 1.2)),
             _box((1.2, 0.0, 0.9), (2.2, 0.8, 1.3))]
    wp = WaypointConstraint(kind="end_effector", position=(0.6, 0.1, 0.85), orientation=(0.0, 0.6, 0.8),
                            velocity=VelocitySpec(mask=(1, 0, 1), value=(0.0, 0.0, -0.2)))
    motion = SegmentMotionConstraint(mask=(0, 0, 1), anchor=(0.0, 0.0, 0.9), segments=[1])
    problem = CostProblem(params=params, weights=weights, polys=polys, constraints=[wp], phi={0: 0},
                          motions=[(motion, [1])])
    return (start, goal), dv, problem


def _J(boundary, dv, problem):
    return total_cost(spline.construct(boundary, dv), dv, problem)[0]


@pytest.mark.parametrize("collision_model", ["varying-ellipsoid", "fixed-ellipsoid"])
def test_total_gradient_matches_finite_difference(collision_model):
    boundary, dv, problem = _setup()
    problem.collision_model = collision_model
    traj = spline.construct(boundary, dv)
    J, dP, dQ, dtau, breakdown = total_cost(traj, dv, problem)
    assert breakdown.total == pytest.approx(J)
    assert breakdown.safety > 0 and breakdown.velocity_cons > 0 and breakdown.orientation > 0
    h = 1e-6
    for name, grad in (("P", dP), ("Q", dQ), ("tau", dtau)):
        base = getattr(dv, name)
        for idx in np.ndindex(base.shape):
            up, down = dv.copy(), dv.copy()
            getattr(up, name)[idx] += h
            getattr(down, name)[idx] -= h
            fd = (_J(boundary, up, problem) - _J(boundary, down, problem)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7 * max(1.0, abs(J)))


def test_rest_to_rest_jerk_cost():
    start = spline.BoundaryState(pos=np.zeros(6))
    goal = spline.BoundaryState(pos=np.ones(6))
    traj = spline.construct((start, goal), spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)), tau=[0.0]))
    total, _, _, (Jc, Jt) = cost_smooth_time(traj, Weights(rho_time=5.0))
    assert Jc == pytest.approx(6 * 720.0)
    assert total == pytest.approx(6 * 720.0 + 5.0)


def test_velocity_penalty_silent_below_limit():
    boundary, dv, problem = _setup()
    slow = AmParams(v_b_max=50.0, v_e_max=50.0)
    J, dC, _ = cost_velocity(spline.construct(boundary, dv), slow, problem.weights)
    assert J == 0.0
    assert np.allclose(dC, 0.0)


def test_cubic_penalty():
    assert np.allclose(K(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 8.0])


def test_hover_end_effector_hangs_below_body():
    params = AmParams()
    p = ee_world(np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3)), np.array([[0.0, 0.0, -0.13]]), params)
    assert np.allclose(p, [[0.0, 0.0, 1.0 - 0.04 - 0.13]])


def test_constraint_validation():
    with pytest.raises(ValidationError):
        WaypointConstraint(kind="end_effector", position=(0, 0, 1), orientation=(0.0, 0.0, 2.0))
    with pytest.raises(ValidationError):
        WaypointConstraint(kind="end_effector", position=(0, 0, 1), guide=True)
    with pytest.raises(ValidationError):
        SegmentMotionConstraint(mask=(0, 2, 1), anchor=(0, 0, 0), segments=[0])
    with pytest.raises(ValidationError):
        SegmentMotionConstraint(anchor=(0, 0, 0))
    with pytest.raises(ValidationError):
        Weights(w_safety=-1.0)


def test_motion_segments_follow_junctions():
    m = SegmentMotionConstraint(anchor=(0, 0, 0), from_waypoint=0, to_waypoint=1)
    assert m.active_segments({0: 1, 1: 3}, 6) == [2, 3]
    explicit = SegmentMotionConstraint(anchor=(0, 0, 0), segments=[4, 1, 9])
    assert explicit.active_segments({}, 6) == [1, 4]


def _energy(traj, pr):
    return cost_smooth_time(traj, pr.weights.model_copy(update={"rho_time": 0.0}))[:3]


def _time(traj, pr):
    J1, c1, t1, _ = cost_smooth_time(traj, pr.weights)
    J0, c0, t0 = _energy(traj, pr)
    return J1 - J0, c1 - c0, t1 - t0


TERMS = {
    "energy": _energy,
    "time": _time,
    "safety-varying": lambda traj, pr: cost_safety(traj, pr.polys, pr.params, pr.weights, "varying-ellipsoid"),
    "safety-fixed": lambda traj, pr: cost_safety(traj, pr.polys, pr.params, pr.weights, "fixed-ellipsoid"),
    "workspace-squared": lambda traj, pr: cost_workspace(traj, pr.params, pr.weights),
    "workspace-signed": lambda traj, pr: cost_workspace(
        traj, pr.params, pr.weights.model_copy(update={"workspace_penalty": "signed"})),
    "velocity": lambda traj, pr: cost_velocity(traj, pr.params.model_copy(update={"v_b_max": 0.5}), pr.weights),
    "bodyrate": lambda traj, pr: cost_bodyrate(
        traj, pr.params.model_copy(update={"omega_xy_max": 0.05}), pr.weights),
    "thrust": lambda traj, pr: cost_thrust(
        traj, pr.params.model_copy(update={"f_lo": 14.8, "f_hi": 15.0}), pr.weights),
    "velocity_cons": lambda traj, pr: cost_velocity_cons(traj, pr.constraints, pr.phi, pr.weights),
    "ee_waypoint": lambda traj, pr: cost_ee_waypoint(traj, pr.constraints, pr.phi, pr.params, pr.weights),
    "axis_motion": lambda traj, pr: cost_axis_motion(traj, pr.motions, pr.params, pr.weights),
    "orientation": lambda traj, pr: cost_orientation(traj, pr.constraints, pr.phi, pr.params, pr.weights),
}


def _shifted(dv, d, h):
    nP, nQ = dv.P.size, dv.Q.size
    out = dv.copy()
    out.P = dv.P + h * d[:nP].reshape(dv.P.shape)
    out.Q = dv.Q + h * d[nP:nP + nQ].reshape(dv.Q.shape)
    out.tau = dv.tau + h * d[nP + nQ:]
    return out


@pytest.mark.parametrize("term", sorted(TERMS))
def test_term_gradient_matches_finite_difference(term):
    boundary, base, problem = _setup()
    fn = TERMS[term]
    h = 1e-6
    for seed in range(20):
        rng = np.random.default_rng(seed)
        d0 = np.concatenate([rng.normal(scale=0.02, size=base.P.size),
                             rng.normal(scale=0.005, size=base.Q.size),
                             rng.normal(scale=0.05, size=base.tau.size)])
        dv = _shifted(base, d0, 1.0)
        traj = spline.construct(boundary, dv)
        J, dC, dT = fn(traj, problem)
        assert J > 0.0
        dP, dQ, dtau = spline.backprop(traj, dC, dT, dv)
        d = rng.normal(size=len(d0))
        d /= np.linalg.norm(d)
        analytic = float(np.concatenate([dP.ravel(), dQ.ravel(), np.ravel(dtau)]) @ d)
        up = fn(spline.construct(boundary, _shifted(dv, d, h)), problem)[0]
        down = fn(spline.construct(boundary, _shifted(dv, d, -h)), problem)[0]
        fd = (up - down) / (2 * h)
        assert abs(fd - analytic) <= 1e-5 * abs(analytic) + 1e-9 * max(1.0, J), (term, seed)


def test_cubic_penalty_is_twice_differentiable_at_zero():
    x = np.array([-1e-8, 1e-8])
    assert np.all(np.abs(K(x)) < 1e-23)
    assert np.all(np.abs(dK(x)) < 1e-15)
    e = 1e-9
    second = (dK(x + e) - dK(x - e)) / (2 * e)
    assert np.all(np.abs(second) < 1e-6)


def test_doubling_durations_scales_jerk_energy():
    boundary, dv, problem = _setup()
    slow = dv.copy()
    slow.tau = dv.tau + np.log(2.0)
    rest = (spline.BoundaryState(pos=boundary[0].pos), spline.BoundaryState(pos=boundary[1].pos))
    energy = [_energy(spline.construct(rest, d), problem)[0] for d in (dv, slow)]
    assert energy[1] / energy[0] == pytest.approx(2.0 ** -5, rel=1e-9)


def test_four_times_more_nodes_barely_moves_penalties():
    # constant-jerk cubic along x; the quintic reproduces it exactly
    T, v0, a0, jerk = 2.0, 1.0, -0.2, 0.2
    x_T = v0 * T + a0 * T ** 2 / 2.0 + jerk * T ** 3 / 6.0
    q = (0.06, 0.0, -0.13)
    start = spline.BoundaryState(pos=np.array([0.0, 0.0, 1.0, *q]), vel=np.array([v0, 0, 0, 0, 0, 0.0]),
                                 acc=np.array([a0, 0, 0, 0, 0, 0.0]))
    goal = spline.BoundaryState(pos=np.array([x_T, 0.0, 1.0, *q]),
                                vel=np.array([v0 + a0 * T + jerk * T ** 2 / 2.0, 0, 0, 0, 0, 0.0]),
                                acc=np.array([a0 + jerk * T, 0, 0, 0, 0, 0.0]))
    traj = spline.construct((start, goal), spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)),
                                                               tau=[np.log(T)]))
    assert np.allclose(spline.eval(traj, 1.0, 3)[:3], [jerk, 0.0, 0.0])
    params = AmParams(v_b_max=0.5, omega_xy_max=0.01).model_copy(update={"f_lo": 14.8, "f_hi": 15.0})
    roof = [_box((-1.0, -1.0, 0.5), (3.0, 1.0, 1.1))]
    values = []
    for N in (16, 64):
        w = Weights(w_safety=10.0, w_workspace=10.0, w_vel=10.0, w_bodyrate=10.0, w_thrust=10.0, N=N)
        values.append({
            "safety": cost_safety(traj, roof, params, w)[0],
            "workspace": cost_workspace(traj, params, w)[0],
            "velocity": cost_velocity(traj, params, w)[0],
            "bodyrate": cost_bodyrate(traj, params, w)[0],
            "thrust": cost_thrust(traj, params, w)[0],
        })
    for name, fine in values[1].items():
        assert fine > 0.0, name
        assert abs(values[0][name] - fine) <= 0.02 * fine, name


def test_velocity_constraint_ignores_body_motion():
    start = spline.BoundaryState.at_rest((0.0, 0.0, 1.0), (0.0, 0.0, -0.13))
    goal = spline.BoundaryState.at_rest((2.0, 0.0, 1.0), (0.0, 0.0, -0.13))
    dv = spline.DecisionVars(P=[[1.0, 0.0, 1.0]], Q=[[0.0, 0.0, -0.13]], tau=[0.0, 0.0])
    traj = spline.construct((start, goal), dv)
    assert np.linalg.norm(spline.eval(traj, 1.0, 1)[:3]) > 1.0
    still = WaypointConstraint(kind="end_effector", position=(1.0, 0.0, 0.83),
                               velocity=VelocitySpec(mask=(1, 1, 1), value=(0.0, 0.0, 0.0)))
    J, dC, _ = cost_velocity_cons(traj, [still], {0: 0}, Weights())
    assert J == pytest.approx(0.0, abs=1e-20)
    moving = still.model_copy(update={"velocity": VelocitySpec(mask=(1, 0, 0), value=(0.5, 0.0, 0.0))})
    J, _, _ = cost_velocity_cons(traj, [moving], {0: 0}, Weights(w_vel_cons=1.0))
    assert J == pytest.approx(0.25)
