from math import factorial

import numpy as np
import pytest

import spline
from errors import OutOfDomain, SingularSystem


def _problem(M=3, seed=0):
    rng = np.random.default_rng(seed)
    start = spline.BoundaryState.at_rest((0.0, 0.0, 1.0), (0.0, 0.0, -0.13))
    goal = spline.BoundaryState(pos=np.array([2.0, 1.0, 1.2, 0.01, 0.0, -0.10]),
                                vel=np.array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0]))
    dv = spline.DecisionVars(P=rng.uniform(0.0, 2.0, (M - 1, 3)),
                             Q=rng.uniform(-0.03, 0.03, (M - 1, 3)) + [0.0, 0.0, -0.13],
                             tau=np.log(rng.uniform(0.8, 1.5, M)))
    return (start, goal), dv


def test_boundary_and_interior_points_are_interpolated():
    boundary, dv = _problem()
    traj = spline.construct(boundary, dv)
    assert np.allclose(spline.eval(traj, 0.0), boundary[0].pos)
    assert np.allclose(spline.eval(traj, traj.total_duration), boundary[1].pos)
    assert np.allclose(spline.eval(traj, traj.total_duration, 1), boundary[1].vel)
    for j in range(dv.M - 1):
        assert np.allclose(spline.eval(traj, traj.junction_time(j)), np.hstack([dv.P[j], dv.Q[j]]))


def test_continuity_up_to_fourth_derivative():
    boundary, dv = _problem(M=4)
    traj = spline.construct(boundary, dv)
    for j in range(traj.M - 1):
        for k in range(5):
            left = spline.basis(traj.durations[j], k) @ traj.coeffs[j]
            right = spline.basis(0.0, k) @ traj.coeffs[j + 1]
            assert np.allclose(left, right, atol=1e-8)


def test_adjoint_gradient_matches_finite_difference():
    boundary, dv = _problem(M=3, seed=4)
    W = np.random.default_rng(1).normal(size=(3, spline.NCOEF, spline.DIMS))

    def J(d):
        return float(np.sum(W * spline.construct(boundary, d).coeffs))

    traj = spline.construct(boundary, dv)
    dP, dQ, dtau = spline.backprop(traj, W, np.zeros(dv.M), dv)
    h = 1e-6
    for name, grad in (("P", dP), ("Q", dQ), ("tau", dtau)):
        base = getattr(dv, name)
        for idx in np.ndindex(base.shape):
            up, down = dv.copy(), dv.copy()
            getattr(up, name)[idx] += h
            getattr(down, name)[idx] -= h
            fd = (J(up) - J(down)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-5)


def test_fixed_rows_receive_no_gradient():
    boundary, dv = _problem()
    dv.fixed[0] = True
    traj = spline.construct(boundary, dv)
    dP, _, _ = spline.backprop(traj, np.ones_like(traj.coeffs), np.zeros(dv.M), dv)
    assert np.allclose(dP[0], 0.0)


def test_single_segment_is_minimum_jerk_rest_to_rest():
    start = spline.BoundaryState(pos=np.zeros(6))
    goal = spline.BoundaryState(pos=np.ones(6))
    traj = spline.construct((start, goal), spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)), tau=[0.0]))
    assert np.allclose(spline.eval(traj, 0.5), 0.5)
    assert np.allclose(spline.eval(traj, 0.5, 1), 1.875)


def test_eval_outside_domain_raises():
    boundary, dv = _problem()
    traj = spline.construct(boundary, dv)
    with pytest.raises(OutOfDomain):
        spline.eval(traj, traj.total_duration + 1.0)


def test_degenerate_inputs_raise():
    boundary, _ = _problem()
    with pytest.raises(SingularSystem):
        spline.construct(boundary, spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)), tau=[]))
    with pytest.raises(SingularSystem):
        spline.construct(boundary, spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)), tau=[-40.0]))


@pytest.mark.parametrize("seed", range(5))
def test_fixed_quadrotor_points_are_exact(seed):
    boundary, dv = _problem(M=5, seed=seed)
    dv.fixed[:] = True
    traj = spline.construct(boundary, dv)
    for j in range(dv.M - 1):
        p = spline.eval(traj, traj.junction_time(j))[:3]
        assert np.linalg.norm(p - dv.P[j]) < 1e-8


def _hermite_row(t, k):
    return np.array([factorial(n) / factorial(n - k) * t ** (n - k) if n >= k else 0.0 for n in range(6)])


def test_single_segment_matches_linear_system_oracle():
    rng = np.random.default_rng(3)
    start = spline.BoundaryState(pos=rng.normal(size=6), vel=rng.normal(size=6), acc=rng.normal(size=6))
    goal = spline.BoundaryState(pos=rng.normal(size=6), vel=rng.normal(size=6), acc=rng.normal(size=6))
    T = 1.3
    traj = spline.construct((start, goal), spline.DecisionVars(P=np.zeros((0, 3)), Q=np.zeros((0, 3)),
                                                               tau=[np.log(T)]))
    A = np.array([_hermite_row(0.0, k) for k in range(3)] + [_hermite_row(T, k) for k in range(3)])
    rhs = np.vstack([start.pos, start.vel, start.acc, goal.pos, goal.vel, goal.acc])
    oracle = np.linalg.solve(A, rhs)
    assert np.max(np.abs(traj.coeffs[0] - oracle)) < 1e-10
