# File: core_model.py
# Version: 2.1 (delta arm + flatness + varying ellipsoid)
"""
Physical model of the aerial manipulator: a quadrotor carrying a 3-DOF delta arm.

Frames: W (world, z up), B (body), D (delta base, parallel to B). The arm hangs below
the body, so end-effector positions in D have negative z.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, model_validator

import settings
from errors import (
    DegenerateThrust,
    GimbalDegenerate,
    NoIntersection,
    NoSolution,
    OutOfWorkspace,
    Singular,
)

Vec3 = Tuple[float, float, float]
CollisionModel = Literal["varying-ellipsoid", "fixed-ellipsoid"]

E1 = np.array([1.0, 0.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
JOINT_ANGLES = (0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0)

# workspace cuboids (delta frame) for the manipulator comparison
WORKSPACE_VARIANTS = {
    "delta": ((-0.04, -0.04, -0.20), (0.04, 0.04, -0.06)),
    "telescopic": ((-0.005, -0.005, -0.25), (0.005, 0.005, -0.06)),
    "arc_1dof": ((-0.18, -0.005, -0.18), (0.18, 0.005, -0.06)),
    "planar_2dof": ((-0.20, -0.005, -0.25), (0.20, 0.005, -0.06)),
}


class AmParams(BaseModel):
    m_c: float = 1.5
    m_e: float = 0.1
    inertia_diag: Vec3 = (0.012, 0.012, 0.022)
    g: float = 9.81
    p_D_in_B: Vec3 = (0.0, 0.0, -0.04)
    p_B_in_D: Vec3 = (0.0, 0.0, 0.04)
    L_u: float = 0.10
    L_l: float = 0.16
    r_s_eff: float = 0.06
    workspace_lo: Vec3 = (-0.04, -0.04, -0.20)
    workspace_hi: Vec3 = (0.04, 0.04, -0.06)
    v_b_max: float = 3.0
    v_e_max: float = 0.8
    omega_xy_max: float = 8.0
    f_lo: float = 3.0
    f_hi: float = 35.0
    r_e: float = 0.15
    d_s: float = 0.01
    p_e0_in_B: Vec3 = (0.0, 0.0, -0.17)

    @model_validator(mode="after")
    def check_invariants(self):
        if not (self.m_c > self.m_e > 0):
            raise ValueError("masses must satisfy m_c > m_e > 0")
        if not (0 < self.f_lo < self.m_c * self.g < self.f_hi):
            raise ValueError("thrust bounds must bracket hover thrust m_c*g")
        if not all(lo < hi for lo, hi in zip(self.workspace_lo, self.workspace_hi)):
            raise ValueError("workspace_lo must be below workspace_hi on every axis")
        if self.workspace_hi[2] >= 0:
            raise ValueError("workspace_hi.z must be negative (arm hangs below the body)")
        if not (self.L_l > self.L_u > 0):
            raise ValueError("arm lengths must satisfy L_l > L_u > 0")
        if self.r_e <= 0 or self.d_s < 0:
            raise ValueError("r_e must be positive and d_s non-negative")
        return self

    @classmethod
    def from_config(cls) -> "AmParams":
        return cls(**settings.section("params"))

    @property
    def workspace_mid(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.workspace_lo) + np.asarray(self.workspace_hi))

    @property
    def h_max(self) -> float:
        """Ellipsoid height with the arm fully extended (fixed-ellipsoid mode)."""
        return max(self.p_B_in_D[2] - self.workspace_lo[2], self.r_e)


def params_for_workspace(variant: str, base: AmParams = None) -> AmParams:
    """Same vehicle, different manipulator workspace cuboid."""
    base = base or AmParams.from_config()
    lo, hi = WORKSPACE_VARIANTS[variant]
    return base.model_copy(update={"workspace_lo": lo, "workspace_hi": hi})


@dataclass(frozen=True)
class AttitudeState:
    R_B: np.ndarray
    thrust: float
    omega_xy: np.ndarray


# =====================================================================================
# DELTA ARM KINEMATICS
# =====================================================================================

def _rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _elbow(q: float, params: AmParams) -> np.ndarray:
    """Elbow point in the joint frame."""
    return np.array([params.r_s_eff + params.L_u * np.sin(q), 0.0, -params.L_u * np.cos(q)])


def _in_workspace(p: np.ndarray, params: AmParams, tol: float = 1e-12) -> bool:
    lo, hi = np.asarray(params.workspace_lo), np.asarray(params.workspace_hi)
    return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))


def delta_ik(p_e_D, params: AmParams, check_workspace: bool = True) -> np.ndarray:
    """Joint angles for an end-effector position in the delta frame (elbow-out branch)."""
    p = np.asarray(p_e_D, dtype=float)
    if check_workspace and not _in_workspace(p, params):
        raise OutOfWorkspace(f"end-effector {p.tolist()} outside workspace cuboid")

    q = np.zeros(3)
    for i, theta in enumerate(JOINT_ANGLES):
        x, y, z = _rot_z(theta).T @ p
        X = x - params.r_s_eff
        a = -2.0 * X * params.L_u
        b = 2.0 * z * params.L_u
        c = params.L_l ** 2 - X ** 2 - y ** 2 - z ** 2 - params.L_u ** 2
        amp = np.hypot(a, b)
        if amp < 1e-15 or abs(c) > amp:
            raise NoSolution(f"joint {i + 1} unreachable (|c|={abs(c):.3e} > {amp:.3e})")
        # a sin q + b cos q = amp * sin(q + phi)
        phi = np.arctan2(b, a)
        base = np.arcsin(np.clip(c / amp, -1.0, 1.0))
        roots = [base - phi, np.pi - base - phi]
        roots = [(r + np.pi) % (2.0 * np.pi) - np.pi for r in roots]
        q[i] = min(roots, key=abs)
    return q


def elbow_points(q, params: AmParams) -> np.ndarray:
    return np.array([_rot_z(theta) @ _elbow(qi, params) for theta, qi in zip(JOINT_ANGLES, q)])


def delta_fk(q, params: AmParams) -> np.ndarray:
    """Lower intersection of the three spheres of radius L_l around the elbows."""
    E = elbow_points(np.asarray(q, dtype=float), params)
    # two plane equations from sphere differences, then a line-sphere intersection
    A = 2.0 * np.array([E[1] - E[0], E[2] - E[0]])
    rhs = np.array([E[1] @ E[1] - E[0] @ E[0], E[2] @ E[2] - E[0] @ E[0]])
    direction = np.cross(E[1] - E[0], E[2] - E[0])
    if np.linalg.norm(direction) < 1e-12:
        raise NoIntersection("elbow points are collinear")
    x0 = np.linalg.lstsq(A, rhs, rcond=None)[0]
    d = direction / np.linalg.norm(direction)
    w = x0 - E[0]
    bq = 2.0 * d @ w
    cq = w @ w - params.L_l ** 2
    disc = bq * bq - 4.0 * cq
    if disc < 0.0:
        raise NoIntersection(f"spheres do not meet (discriminant {disc:.3e})")
    roots = [(-bq + np.sqrt(disc)) / 2.0, (-bq - np.sqrt(disc)) / 2.0]
    candidates = [x0 + t * d for t in roots]
    return min(candidates, key=lambda p: p[2])


def delta_jacobian(p_e_D, q, params: AmParams, eps: float = 1e-9) -> np.ndarray:
    """J with q_dot = J @ p_dot, from the implicit function theorem on each joint constraint."""
    p = np.asarray(p_e_D, dtype=float)
    J = np.zeros((3, 3))
    for i, (theta, qi) in enumerate(zip(JOINT_ANGLES, q)):
        Rz = _rot_z(theta)
        r = Rz.T @ p - _elbow(qi, params)
        dF_dp = 2.0 * Rz @ r
        dE_dq = np.array([params.L_u * np.cos(qi), 0.0, params.L_u * np.sin(qi)])
        dF_dq = -2.0 * r @ dE_dq
        if abs(dF_dq) < eps:
            raise Singular(f"joint {i + 1} implicit derivative {dF_dq:.3e} below {eps}")
        J[i] = -dF_dp / dF_dq
    return J


# =====================================================================================
# FLATNESS: ACCELERATION / JERK -> ATTITUDE
# =====================================================================================

def thrust_vectors(acc, params: AmParams, f_ext=(0.0, 0.0, 0.0)) -> np.ndarray:
    """f = m_c (a + g e3) - f_ext, row-wise."""
    acc = np.asarray(acc, dtype=float)
    return params.m_c * (acc + params.g * E3) - np.asarray(f_ext, dtype=float)


def rotation_from_thrust(z_B) -> np.ndarray:
    """Rotation with zero yaw whose third column is z_B. Works on (3,) or (n, 3)."""
    z = np.atleast_2d(np.asarray(z_B, dtype=float))
    u = np.cross(z, E1)
    nu = np.linalg.norm(u, axis=1)
    if np.any(nu < 1e-9):
        raise GimbalDegenerate("thrust direction parallel to world x")
    y = u / nu[:, None]
    x = np.cross(y, z)
    R = np.stack([x, y, z], axis=2)
    return R[0] if np.ndim(z_B) == 1 else R


def flat_to_attitude(acc_b, jerk_b, f_ext, params: AmParams) -> AttitudeState:
    f = thrust_vectors(acc_b, params, f_ext)
    thrust = float(np.linalg.norm(f))
    if thrust <= 1e-6:
        raise DegenerateThrust(f"thrust norm {thrust:.3e}")
    z = f / thrust
    R = rotation_from_thrust(z)
    z_dot = (np.eye(3) - np.outer(z, z)) @ (params.m_c * np.asarray(jerk_b, dtype=float)) / thrust
    omega = np.array([-R[:, 1] @ z_dot, R[:, 0] @ z_dot])
    return AttitudeState(R_B=R, thrust=thrust, omega_xy=omega)


def rotation_vjp(z, v, g) -> np.ndarray:
    """Gradient w.r.t. z_B of <g, R(z_B) v>, row-wise over nodes."""
    z, v, g = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (z, v, g))
    u = np.cross(z, E1)
    nu = np.linalg.norm(u, axis=1, keepdims=True)
    y = u / nu

    def dy_t(w):
        w = w - y * np.sum(y * w, axis=1, keepdims=True)
        w = w / nu
        # transpose of d(z x e1)/dz applied to w
        return np.stack([np.zeros(len(w)), -w[:, 2], w[:, 1]], axis=1)

    vx, vy, vz = v[:, 0:1], v[:, 1:2], v[:, 2:3]
    return vz * g + vx * np.cross(g, y) + dy_t(vx * np.cross(z, g) + vy * g)


def thrust_direction_vjp(z, thrust, grad_z, m_c: float) -> np.ndarray:
    """Pulls a gradient on z_B = f/|f| back to the acceleration."""
    z = np.atleast_2d(z)
    grad_z = np.atleast_2d(grad_z)
    proj = grad_z - z * np.sum(z * grad_z, axis=1, keepdims=True)
    return m_c * proj / np.reshape(thrust, (-1, 1))


def nominal_body_position(p_e_world, o_des, params: AmParams) -> np.ndarray:
    """Body position that puts the arm at mid extension under p_e_world, thrust along o_des."""
    z = E3 if o_des is None else np.asarray(o_des, dtype=float) / np.linalg.norm(o_des)
    R = rotation_from_thrust(z)
    q_nom = np.array([0.0, 0.0, params.workspace_mid[2]])
    return np.asarray(p_e_world, dtype=float) - R @ (np.asarray(params.p_D_in_B) + q_nom)


# =====================================================================================
# VARYING ELLIPSOID
# =====================================================================================

def ellipsoid_height(p_e_D, params: AmParams):
    """z semi-axis tracking the arm extension, clamped below at r_e."""
    p = np.asarray(p_e_D, dtype=float)
    h = params.p_B_in_D[2] - p[..., 2]
    return np.maximum(h, params.r_e)


def ellipsoid_support(R_B, G, n_hat, p_b) -> np.ndarray:
    """Point of the ellipsoid {R G u + p_b : |u| <= 1} that maximizes x . n_hat."""
    R = np.asarray(R_B, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.ndim == 1:
        G = np.diag(G)
    bn = R.T @ np.asarray(n_hat, dtype=float)
    p_body = G @ G @ bn / np.linalg.norm(G @ bn)
    return R @ p_body + np.asarray(p_b, dtype=float)


# =====================================================================================
# DIAGNOSTICS (never part of the objective)
# =====================================================================================

def dynamics_diagnostics(R_B, p_e_B, f_ext, params: AmParams):
    """End-effector force/moment in B and combined inertia."""
    R = np.asarray(R_B, dtype=float)
    p_e = np.asarray(p_e_B, dtype=float)
    offset = p_e - np.asarray(params.p_e0_in_B)
    f_e = R.T @ np.asarray(f_ext, dtype=float)
    tau_e = np.cross(p_e, f_e) + np.cross(offset, R.T @ (params.m_e * params.g * E3))
    I_c = np.diag(params.inertia_diag) + params.m_e * np.diag(offset ** 2)
    return f_e, tau_e, I_c
