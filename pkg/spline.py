# File: spline.py
# Version: 1.4 (banded minimum-jerk construction + adjoint gradients)
"""
Piecewise quintic trajectories in 6 dimensions (quadrotor xyz in W, end-effector xyz in D).

The coefficient matrix of every segment is the unique minimum-jerk solution of a banded
linear system built from boundary states, intermediate points and durations. Gradients
of any cost on the coefficients are pulled back to the decision variables through one
adjoint solve with the transposed system.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Tuple

import numpy as np
from scipy.linalg import LinAlgError, solve_banded

import settings
from errors import OutOfDomain, SingularSystem

S = 3
NCOEF = 2 * S
DIMS = 6


@dataclass(frozen=True)
class BoundaryState:
    pos: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(DIMS))
    acc: np.ndarray = field(default_factory=lambda: np.zeros(DIMS))

    @classmethod
    def at_rest(cls, p_b, p_e_D) -> "BoundaryState":
        return cls(pos=np.concatenate([np.asarray(p_b, float), np.asarray(p_e_D, float)]))

    def column(self, k: int) -> np.ndarray:
        return np.asarray((self.pos, self.vel, self.acc)[k], dtype=float)


@dataclass
class DecisionVars:
    P: np.ndarray
    Q: np.ndarray
    tau: np.ndarray
    fixed: np.ndarray = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float).reshape(-1, 3)
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1, 3)
        self.tau = np.asarray(self.tau, dtype=float).reshape(-1)
        if self.fixed is None:
            self.fixed = np.zeros(len(self.P), dtype=bool)
        self.fixed = np.asarray(self.fixed, dtype=bool)

    @property
    def M(self) -> int:
        return len(self.tau)

    @property
    def T(self) -> np.ndarray:
        return np.exp(self.tau)

    def copy(self) -> "DecisionVars":
        return DecisionVars(self.P.copy(), self.Q.copy(), self.tau.copy(), self.fixed.copy())


@dataclass(frozen=True)
class Trajectory6:
    coeffs: np.ndarray          # (M, NCOEF, DIMS)
    durations: np.ndarray       # (M,)
    system: np.ndarray = field(repr=False, default=None)

    @property
    def M(self) -> int:
        return len(self.durations)

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)[:-1]])

    @property
    def total_duration(self) -> float:
        return float(np.sum(self.durations))

    def junction_time(self, j: int) -> float:
        """Time of intermediate point j (end of segment j)."""
        return float(np.sum(self.durations[: j + 1]))


def basis(t, order: int = 0) -> np.ndarray:
    """beta^(order)(t) for scalar or array t; shape (..., NCOEF)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (NCOEF,))
    for n in range(order, NCOEF):
        out[..., n] = factorial(n) / factorial(n - order) * t ** (n - order)
    return out


def _to_banded(A: np.ndarray):
    rows, cols = np.nonzero(A)
    lower = int(np.max(rows - cols, initial=0))
    upper = int(np.max(cols - rows, initial=0))
    ab = np.zeros((lower + upper + 1, A.shape[1]))
    ab[upper + rows - cols, cols] = A[rows, cols]
    return (lower, upper), ab


def _banded_solve(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    lu, ab = _to_banded(A)
    try:
        x = solve_banded(lu, ab, rhs)
    except (LinAlgError, ValueError) as e:
        raise SingularSystem(f"banded solve failed: {e}")
    if not np.all(np.isfinite(x)):
        raise SingularSystem("banded solve produced non-finite coefficients")
    return x


def _system(T: np.ndarray) -> np.ndarray:
    M = len(T)
    n = NCOEF * M
    A = np.zeros((n, n))
    for k in range(S):
        A[k, 0:NCOEF] = basis(0.0, k)
    for j in range(M - 1):
        r = S + NCOEF * j
        cj, cn = slice(NCOEF * j, NCOEF * (j + 1)), slice(NCOEF * (j + 1), NCOEF * (j + 2))
        A[r, cj] = basis(T[j], 0)
        for k in range(2 * S - 1):
            A[r + 1 + k, cj] = basis(T[j], k)
            A[r + 1 + k, cn] = -basis(0.0, k)
    for k in range(S):
        A[n - S + k, NCOEF * (M - 1):] = basis(T[-1], k)
    return A


def construct(boundary: Tuple[BoundaryState, BoundaryState], dv: DecisionVars) -> Trajectory6:
    start, goal = boundary
    M = dv.M
    if M < 1:
        raise SingularSystem("at least one segment is required")
    T = dv.T
    if np.any(~np.isfinite(T)) or np.any(T < 1e-9):
        raise SingularSystem(f"segment durations out of range: min {np.min(T):.3e}")
    if np.max(T) / np.min(T) > 1e4:
        settings.log("SPLINE", f"⚠️ duration ratio {np.max(T) / np.min(T):.1e} may be ill-conditioned")

    A = _system(T)
    b = np.zeros((NCOEF * M, DIMS))
    for k in range(S):
        b[k] = start.column(k)
        b[-S + k] = goal.column(k)
    inner = np.hstack([dv.P, dv.Q])
    for j in range(M - 1):
        b[S + NCOEF * j] = inner[j]
    C = _banded_solve(A, b)
    return Trajectory6(coeffs=C.reshape(M, NCOEF, DIMS), durations=T, system=A)


def _locate(traj: Trajectory6, t: float):
    total = traj.total_duration
    if t < -1e-12 or t > total + 1e-12:
        raise OutOfDomain(f"t={t} outside [0, {total}]")
    i = int(np.searchsorted(traj.starts, t, side="right") - 1)
    i = min(max(i, 0), traj.M - 1)
    return i, min(max(t - traj.starts[i], 0.0), traj.durations[i])


def eval(traj: Trajectory6, t: float, order: int = 0) -> np.ndarray:  # noqa: A001
    i, local = _locate(traj, t)
    return basis(local, order) @ traj.coeffs[i]


def sample(traj: Trajectory6, times, order: int = 0) -> np.ndarray:
    """eval over an array of times, shape (len(times), DIMS)."""
    return np.array([eval(traj, float(t), order) for t in times])


def backprop(traj: Trajectory6, dJ_dC: np.ndarray, dJ_dT_direct: np.ndarray, dv: DecisionVars):
    """Chain rule through A(T) C = b(q): returns (dJ_dP, dJ_dQ, dJ_dtau)."""
    M = traj.M
    A = traj.system
    C = traj.coeffs
    T = traj.durations
    lam = _banded_solve(A.T.copy(), np.asarray(dJ_dC, dtype=float).reshape(NCOEF * M, DIMS))

    d_inner = np.array([lam[S + NCOEF * j] for j in range(M - 1)]).reshape(-1, DIMS)
    dP = d_inner[:, :3].copy()
    dQ = d_inner[:, 3:].copy()
    dP[dv.fixed] = 0.0

    dT = np.array(dJ_dT_direct, dtype=float).copy()
    for j in range(M - 1):
        r = S + NCOEF * j
        dT[j] -= lam[r] @ (basis(T[j], 1) @ C[j])
        for k in range(2 * S - 1):
            dT[j] -= lam[r + 1 + k] @ (basis(T[j], k + 1) @ C[j])
    n = NCOEF * M
    for k in range(S):
        dT[-1] -= lam[n - S + k] @ (basis(T[-1], k + 1) @ C[-1])
    return dP, dQ, dT * T
