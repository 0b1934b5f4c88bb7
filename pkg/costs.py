# File: costs.py
# Version: 1.6 (discretized penalties with analytic gradients)
"""
Objective terms of the whole-body planner.

Every term returns (value, dJ_dC, dJ_dT) where dJ_dC has the coefficient layout of
Trajectory6.coeffs and dJ_dT is the direct (explicit) dependence on each duration.
`total_cost` sums the weighted terms and routes the result through spline.backprop.

Integrals are discretized on left nodes t_n = n T_i / N, n = 0..N-1, each weighted T_i / N.
Junction terms are read at t = 0 of the segment that starts at the junction; by C4
continuity this equals the value at the end of the previous segment.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

import settings
import spline
from core_model import (
    AmParams,
    CollisionModel,
    nominal_body_position,
    rotation_from_thrust,
    rotation_vjp,
    thrust_direction_vjp,
    thrust_vectors,
)
from errors import DegenerateThrust

Vec3 = Tuple[float, float, float]
Mask = Tuple[int, int, int]


# =====================================================================================
# CONSTRAINT / WEIGHT SCHEMAS
# =====================================================================================

def _binary(mask):
    if any(m not in (0, 1) for m in mask):
        raise ValueError("masks must be binary")
    return mask


class VelocitySpec(BaseModel):
    mask: Mask = (1, 1, 1)
    value: Vec3 = (0.0, 0.0, 0.0)

    @field_validator("mask")
    @classmethod
    def check_mask(cls, v):
        return _binary(v)


class Surface(BaseModel):
    point: Vec3
    normal: Vec3
    half_extents: Tuple[float, float] = (0.5, 0.5)

    @field_validator("normal")
    @classmethod
    def normalize_normal(cls, v):
        n = np.linalg.norm(v)
        if n < 1e-9:
            raise ValueError("surface normal must be non-zero")
        return tuple(float(x) for x in np.asarray(v) / n)


class WaypointConstraint(BaseModel):
    kind: Literal["quadrotor", "end_effector"]
    position: Vec3
    velocity: Optional[VelocitySpec] = None
    orientation: Optional[Vec3] = None
    surface: Optional[Surface] = None
    guide: bool = False
    label: str = ""

    @model_validator(mode="after")
    def check_invariants(self):
        if self.orientation is not None and abs(np.linalg.norm(self.orientation) - 1.0) > 1e-6:
            raise ValueError("orientation must be a unit vector")
        if self.guide and self.kind != "quadrotor":
            raise ValueError("guide points are always quadrotor waypoints")
        return self

    def path_point(self, params: AmParams) -> np.ndarray:
        """Body position used by path search and corridor construction."""
        if self.kind == "quadrotor":
            return np.asarray(self.position, dtype=float)
        return nominal_body_position(self.position, self.orientation, params)


class SegmentMotionConstraint(BaseModel):
    mask: Mask = (0, 0, 1)
    anchor: Vec3
    from_waypoint: Optional[int] = None
    to_waypoint: Optional[int] = None
    segments: Optional[List[int]] = None

    @field_validator("mask")
    @classmethod
    def check_mask(cls, v):
        return _binary(v)

    @model_validator(mode="after")
    def check_invariants(self):
        if self.segments is None and (self.from_waypoint is None or self.to_waypoint is None):
            raise ValueError("give explicit segments or a from_waypoint/to_waypoint pair")
        if self.segments is not None and len(self.segments) == 0:
            raise ValueError("at least one active segment is required")
        return self

    def active_segments(self, phi: Dict[int, int], M: int) -> List[int]:
        """Segments between the two waypoints' junctions (or the explicit list)."""
        if self.segments is not None:
            return sorted(s for s in self.segments if 0 <= s < M)
        a, b = phi[self.from_waypoint], phi[self.to_waypoint]
        return list(range(a + 1, b + 1))


class Weights(BaseModel):
    rho_time: float = 20.0
    w_safety: float = 1e4
    w_workspace: float = 1e4
    w_vel: float = 1e3
    w_bodyrate: float = 1e3
    w_thrust: float = 1e3
    w_ee_waypoint: float = 1e5
    w_axis: float = 1e4
    w_vel_cons: float = 1e4
    w_orient: float = 1e4
    N: int = 16
    f_ext: Vec3 = (0.0, 0.0, 0.0)
    workspace_penalty: Literal["squared", "signed"] = "squared"

    @model_validator(mode="after")
    def check_invariants(self):
        values = [v for k, v in self.__dict__.items() if k.startswith("w_") or k == "rho_time"]
        if any(v < 0 for v in values):
            raise ValueError("weights must be non-negative")
        if self.N < 8:
            raise ValueError("N must be at least 8")
        return self

    @classmethod
    def from_config(cls) -> "Weights":
        return cls(**settings.section("weights"))


class CostBreakdown(BaseModel):
    smooth: float = 0.0
    time: float = 0.0
    safety: float = 0.0
    workspace: float = 0.0
    velocity: float = 0.0
    bodyrate: float = 0.0
    thrust: float = 0.0
    ee_waypoint: float = 0.0
    axis_motion: float = 0.0
    velocity_cons: float = 0.0
    orientation: float = 0.0
    total: float = 0.0


@dataclass
class CostProblem:
    """Everything the objective needs besides the trajectory."""
    params: AmParams
    weights: Weights
    polys: Sequence = ()
    constraints: Sequence[WaypointConstraint] = ()
    phi: Dict[int, int] = field(default_factory=dict)
    motions: Sequence[Tuple[SegmentMotionConstraint, List[int]]] = ()
    collision_model: CollisionModel = "varying-ellipsoid"


# =====================================================================================
# NODE MACHINERY
# =====================================================================================

def K(x):
    """Cubic penalty max(x, 0)^3."""
    return np.maximum(x, 0.0) ** 3


def dK(x):
    return 3.0 * np.maximum(x, 0.0) ** 2


@dataclass
class _Nodes:
    T: float
    frac: np.ndarray            # n / N
    B: List[np.ndarray]         # basis rows per order
    P: List[np.ndarray]         # derivatives per order, (N, 6)


def _segment_nodes(traj: spline.Trajectory6, i: int, N: int, max_order: int = 5) -> _Nodes:
    T = traj.durations[i]
    frac = np.arange(N) / N
    B = [spline.basis(frac * T, k) for k in range(max_order + 1)]
    P = [b @ traj.coeffs[i] for b in B]
    return _Nodes(T=T, frac=frac, B=B, P=P)


def _integrate(traj: spline.Trajectory6, N: int, node_fn, segments=None):
    """Sum_i Sum_n (T_i/N) phi(nodes); node_fn returns (phi (N,), {order: dphi (N, 6)})."""
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    J = 0.0
    for i in (range(traj.M) if segments is None else segments):
        nd = _segment_nodes(traj, i, N)
        val, grads = node_fn(i, nd)
        scale = nd.T / N
        J += scale * float(np.sum(val))
        dT[i] += float(np.sum(val)) / N
        for k, g in grads.items():
            dC[i] += scale * nd.B[k].T @ g
            dT[i] += scale * float(np.sum(np.sum(g * nd.P[k + 1], axis=1) * nd.frac))
    return J, dC, dT


def _junction_values(traj: spline.Trajectory6, j: int, max_order: int = 3):
    """Derivatives at intermediate point j, read at the start of segment j + 1."""
    c = traj.coeffs[j + 1]
    return [factorial(k) * c[k] for k in range(max_order + 1)]


def _junction_grad(dC: np.ndarray, j: int, grads: Dict[int, np.ndarray]):
    for k, g in grads.items():
        dC[j + 1, k] += factorial(k) * g


def _attitude(acc: np.ndarray, params: AmParams, f_ext):
    f = thrust_vectors(acc, params, f_ext)
    F = np.linalg.norm(f, axis=-1)
    if np.any(F <= 1e-6):
        raise DegenerateThrust("thrust vanishes at a discretization node")
    return f, F, f / F[..., None]


def _pad6(g3: np.ndarray, upper: bool) -> np.ndarray:
    out = np.zeros(g3.shape[:-1] + (6,))
    if upper:
        out[..., 3:] = g3
    else:
        out[..., :3] = g3
    return out


def _ee_world_vjp(p_b, acc, q, params: AmParams, f_ext, g):
    """Gradients of <g, p_e> with p_e = R(acc)(p_D + q) + p_b, row-wise."""
    f, F, z = _attitude(acc, params, f_ext)
    v = np.asarray(params.p_D_in_B) + q
    R = rotation_from_thrust(z)
    dz = rotation_vjp(z, v, g)
    d_acc = thrust_direction_vjp(z, F, dz, params.m_c)
    d_q = np.einsum("nji,nj->ni", R, g)
    return g, d_acc, d_q


def ee_world(p_b, acc, q, params: AmParams, f_ext=(0.0, 0.0, 0.0)) -> np.ndarray:
    """World end-effector position, row-wise over nodes."""
    _, _, z = _attitude(np.atleast_2d(acc), params, f_ext)
    R = rotation_from_thrust(z)
    v = np.asarray(params.p_D_in_B) + np.atleast_2d(q)
    return np.einsum("nij,nj->ni", R, v) + np.atleast_2d(p_b)


# =====================================================================================
# TERMS
# =====================================================================================

def _jerk_gram(T: float) -> np.ndarray:
    Q = np.zeros((spline.NCOEF, spline.NCOEF))
    for m in range(3, spline.NCOEF):
        for n in range(3, spline.NCOEF):
            cm = factorial(m) / factorial(m - 3)
            cn = factorial(n) / factorial(n - 3)
            p = m + n - 5
            Q[m, n] = cm * cn * T ** p / p
    return Q


def cost_smooth_time(traj: spline.Trajectory6, weights: Weights):
    """J_c + rho * J_t; also returns the two parts."""
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    Jc = 0.0
    for i, (T, c) in enumerate(zip(traj.durations, traj.coeffs)):
        Q = _jerk_gram(T)
        Jc += float(np.sum(c * (Q @ c)))
        dC[i] = 2.0 * Q @ c
        jerk_end = spline.basis(T, 3) @ c
        dT[i] = float(jerk_end @ jerk_end) + weights.rho_time
    Jt = float(np.sum(traj.durations))
    return Jc + weights.rho_time * Jt, dC, dT, (Jc, Jt)


def cost_safety(traj: spline.Trajectory6, polys, params: AmParams, weights: Weights,
                collision_model: CollisionModel = "varying-ellipsoid"):
    w = weights.w_safety
    r2 = params.r_e ** 2

    def node_fn(i, nd):
        A, b = polys[i].A, polys[i].b
        p_b, acc, q = nd.P[0][:, :3], nd.P[2][:, :3], nd.P[0][:, 3:]
        _, F, z = _attitude(acc, params, weights.f_ext)
        if collision_model == "fixed-ellipsoid":
            h = np.full(len(q), params.h_max)
            active = np.zeros(len(q), dtype=bool)
        else:
            h_raw = params.p_B_in_D[2] - q[:, 2]
            active = h_raw > params.r_e
            h = np.where(active, h_raw, params.r_e)
        zn = z @ A.T                                        # (N, K)
        s = np.sqrt(r2 + (h[:, None] ** 2 - r2) * zn ** 2)
        viol = s + p_b @ A.T - b[None, :] + params.d_s
        val = w * np.sum(K(viol), axis=1)
        gk = w * dK(viol)
        g_pb = gk @ A
        g_h = np.sum(gk * h[:, None] * zn ** 2 / s, axis=1)
        g_z = (gk * (h[:, None] ** 2 - r2) * zn / s) @ A
        g_acc = thrust_direction_vjp(z, F, g_z, params.m_c)
        g_q = np.zeros_like(q)
        g_q[:, 2] = np.where(active, -g_h, 0.0)
        return val, {0: np.hstack([g_pb, g_q]), 2: _pad6(g_acc, upper=False)}

    J, dC, dT = _integrate(traj, weights.N, node_fn)
    return J, dC, dT


def _workspace_bounds(params: AmParams, mode: str):
    lo = np.asarray(params.workspace_lo, dtype=float)
    hi = np.asarray(params.workspace_hi, dtype=float)
    if mode == "signed":
        return lo, hi
    # magnitude bounds on |component|
    same_sign = (lo >= 0) | (hi <= 0)
    m_lo = np.where(same_sign, np.minimum(np.abs(lo), np.abs(hi)), 0.0)
    m_hi = np.maximum(np.abs(lo), np.abs(hi))
    return m_lo, m_hi


def cost_workspace(traj: spline.Trajectory6, params: AmParams, weights: Weights):
    w = weights.w_workspace
    mode = weights.workspace_penalty
    k_lo, k_hi = _workspace_bounds(params, mode)

    def node_fn(i, nd):
        q = nd.P[0][:, 3:]
        if mode == "signed":
            up, down = q - k_hi, k_lo - q
            val = w * np.sum(K(up) + K(down), axis=1)
            g = w * (dK(up) - dK(down))
        else:
            up, down = q ** 2 - k_hi ** 2, k_lo ** 2 - q ** 2
            val = w * np.sum(K(up) + K(down), axis=1)
            g = w * 2.0 * q * (dK(up) - dK(down))
        return val, {0: _pad6(g, upper=True)}

    return _integrate(traj, weights.N, node_fn)


def cost_velocity(traj: spline.Trajectory6, params: AmParams, weights: Weights):
    w = weights.w_vel

    def node_fn(i, nd):
        v_b, v_e = nd.P[1][:, :3], nd.P[1][:, 3:]
        pb = np.sum(v_b ** 2, axis=1) - params.v_b_max ** 2
        pe = np.sum(v_e ** 2, axis=1) - params.v_e_max ** 2
        val = w * (K(pb) + K(pe))
        g = np.hstack([w * dK(pb)[:, None] * 2.0 * v_b, w * dK(pe)[:, None] * 2.0 * v_e])
        return val, {1: g}

    return _integrate(traj, weights.N, node_fn)


def cost_bodyrate(traj: spline.Trajectory6, params: AmParams, weights: Weights):
    w = weights.w_bodyrate
    m2 = params.m_c ** 2

    def node_fn(i, nd):
        acc, jerk = nd.P[2][:, :3], nd.P[3][:, :3]
        f, F, z = _attitude(acc, params, weights.f_ext)
        fj = np.sum(f * jerk, axis=1)
        jj = np.sum(jerk * jerk, axis=1)
        F2 = F ** 2
        omega2 = m2 * (jj / F2 - fj ** 2 / F2 ** 2)
        pen = omega2 - params.omega_xy_max ** 2
        val = w * K(pen)
        gw = w * dK(pen)
        d_jerk = 2.0 * m2 * (jerk - (fj / F2)[:, None] * f) / F2[:, None]
        d_f = m2 * (-2.0 * (jj / F2 ** 2)[:, None] * f
                    - 2.0 * (fj / F2 ** 2)[:, None] * jerk
                    + 4.0 * (fj ** 2 / F2 ** 3)[:, None] * f)
        return val, {2: _pad6(gw[:, None] * params.m_c * d_f, upper=False),
                     3: _pad6(gw[:, None] * d_jerk, upper=False)}

    return _integrate(traj, weights.N, node_fn)


def cost_thrust(traj: spline.Trajectory6, params: AmParams, weights: Weights):
    w = weights.w_thrust

    def node_fn(i, nd):
        f = thrust_vectors(nd.P[2][:, :3], params, weights.f_ext)
        F2 = np.sum(f * f, axis=1)
        up, down = F2 - params.f_hi ** 2, params.f_lo ** 2 - F2
        val = w * (K(up) + K(down))
        g = w * (dK(up) - dK(down))[:, None] * 2.0 * params.m_c * f
        return val, {2: _pad6(g, upper=False)}

    return _integrate(traj, weights.N, node_fn)


def cost_ee_waypoint(traj: spline.Trajectory6, constraints, phi, params: AmParams, weights: Weights):
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    J = 0.0
    w = weights.w_ee_waypoint
    for lam, con in enumerate(constraints):
        if con.kind != "end_effector":
            continue
        j = phi[lam]
        P0, _, P2, _ = _junction_values(traj, j)
        p_b, acc, q = P0[None, :3], P2[None, :3], P0[None, 3:]
        err = ee_world(p_b, acc, q, params, weights.f_ext) - np.asarray(con.position)
        J += w * float(np.sum(err ** 2))
        g_pb, g_acc, g_q = _ee_world_vjp(p_b, acc, q, params, weights.f_ext, 2.0 * w * err)
        _junction_grad(dC, j, {0: np.concatenate([g_pb[0], g_q[0]]),
                               2: np.concatenate([g_acc[0], np.zeros(3)])})
    return J, dC, dT


def cost_axis_motion(traj: spline.Trajectory6, motions, params: AmParams, weights: Weights):
    """motions: list of (SegmentMotionConstraint, active segment indices)."""
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    J = 0.0
    w = weights.w_axis
    for con, segments in motions:
        mask = np.asarray(con.mask, dtype=float)
        anchor = np.asarray(con.anchor, dtype=float)

        def node_fn(i, nd):
            p_b, acc, q = nd.P[0][:, :3], nd.P[2][:, :3], nd.P[0][:, 3:]
            err = mask * (ee_world(p_b, acc, q, params, weights.f_ext) - anchor)
            val = w * np.sum(err ** 2, axis=1)
            g_pb, g_acc, g_q = _ee_world_vjp(p_b, acc, q, params, weights.f_ext, 2.0 * w * mask * err)
            return val, {0: np.hstack([g_pb, g_q]), 2: _pad6(g_acc, upper=False)}

        j, c, t = _integrate(traj, weights.N, node_fn, segments=segments)
        J, dC, dT = J + j, dC + c, dT + t
    return J, dC, dT


def cost_velocity_cons(traj: spline.Trajectory6, constraints, phi, weights: Weights):
    """
    Masked end-effector velocity error at constrained junctions. The velocity is the rate of
    the delta-frame position q, relative to the body; body motion does not enter it.
    """
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    J = 0.0
    w = weights.w_vel_cons
    for lam, con in enumerate(constraints):
        if con.velocity is None:
            continue
        j = phi[lam]
        mask = np.asarray(con.velocity.mask, dtype=float)
        v_e = _junction_values(traj, j)[1][3:]
        err = mask * (v_e - np.asarray(con.velocity.value))
        J += w * float(err @ err)
        _junction_grad(dC, j, {1: np.concatenate([np.zeros(3), 2.0 * w * mask * err])})
    return J, dC, dT


def cost_orientation(traj: spline.Trajectory6, constraints, phi, params: AmParams, weights: Weights):
    """|f - |f| o_des|^2 at constrained junctions."""
    dC = np.zeros_like(traj.coeffs)
    dT = np.zeros(traj.M)
    J = 0.0
    w = weights.w_orient
    for lam, con in enumerate(constraints):
        if con.orientation is None:
            continue
        j = phi[lam]
        o = np.asarray(con.orientation, dtype=float)
        acc = _junction_values(traj, j)[2][:3]
        f, F, z = _attitude(acc[None], params, weights.f_ext)
        f, F, z = f[0], F[0], z[0]
        r = f - F * o
        J += w * float(r @ r)
        g_f = 2.0 * w * (r - z * (o @ r))
        _junction_grad(dC, j, {2: np.concatenate([params.m_c * g_f, np.zeros(3)])})
    return J, dC, dT


def cost_axis_velocity_orientation(traj, problem: CostProblem):
    """J_pe, J_ve, J_oe together, as the task-constraint block of the objective."""
    return (
        cost_axis_motion(traj, problem.motions, problem.params, problem.weights),
        cost_velocity_cons(traj, problem.constraints, problem.phi, problem.weights),
        cost_orientation(traj, problem.constraints, problem.phi, problem.params, problem.weights),
    )


# =====================================================================================
# TOTAL
# =====================================================================================

def total_cost_coeffs(traj: spline.Trajectory6, problem: CostProblem):
    """Weighted sum of all terms with gradients on coefficients and direct times."""
    p, wts = problem.params, problem.weights
    smooth, dC, dT, (Jc, Jt) = cost_smooth_time(traj, wts)
    parts = {"smooth": Jc, "time": wts.rho_time * Jt}

    terms = {}
    if problem.polys:
        terms["safety"] = cost_safety(traj, problem.polys, p, wts, problem.collision_model)
    terms["workspace"] = cost_workspace(traj, p, wts)
    terms["velocity"] = cost_velocity(traj, p, wts)
    terms["bodyrate"] = cost_bodyrate(traj, p, wts)
    terms["thrust"] = cost_thrust(traj, p, wts)
    terms["ee_waypoint"] = cost_ee_waypoint(traj, problem.constraints, problem.phi, p, wts)
    axis, vel, orient = cost_axis_velocity_orientation(traj, problem)
    terms["axis_motion"], terms["velocity_cons"], terms["orientation"] = axis, vel, orient

    J = smooth
    for name, (value, c, t) in terms.items():
        parts[name] = value
        J += value
        dC = dC + c
        dT = dT + t
    breakdown = CostBreakdown(**parts, total=J)
    return J, dC, dT, breakdown


def total_cost(traj: spline.Trajectory6, dv: spline.DecisionVars, problem: CostProblem):
    """(J, dJ_dP, dJ_dQ, dJ_dtau, CostBreakdown)."""
    J, dC, dT, breakdown = total_cost_coeffs(traj, problem)
    dP, dQ, dtau = spline.backprop(traj, dC, dT, dv)
    return J, dP, dQ, dtau, breakdown
