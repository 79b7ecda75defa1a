"""
Discrete LQR for platoon gap keeping.

Each follower regulates x = [e_s, e_v] (spacing error, relative speed to predecessor)
with a double-integrator model; the lead vehicle holds the cruise speed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .dynamics import DT, DynamicsLimits, VehicleState
from .errors import ConfigError, LqrError

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class LqrConfig:
    q: tuple[float, float] = (1.0, 0.5)
    r: float = 1.0
    h_target: float = 8.0
    tol: float = 1e-12
    max_iter: int = 100_000

    def __post_init__(self):
        if min(self.q) < 0:
            raise ConfigError("state weights must be >= 0", "lqr.q")
        if self.r <= 0:
            raise ConfigError("must be > 0", "lqr.r")
        if self.h_target <= 0:
            raise ConfigError("must be > 0", "lqr.h_target")


@dataclass(frozen=True)
class GapState:
    e_s: float
    e_v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e_s, self.e_v])


@dataclass(frozen=True)
class LqrDesign:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    K: np.ndarray  # u = K @ x (follower acceleration)
    dt: float

    def accel(self, state: GapState) -> float:
        return float(self.K @ state.as_array())


def _stabilizable(A: np.ndarray, B: np.ndarray, tol: float = 1e-9) -> bool:
    """PBH test restricted to eigenvalues on or outside the unit circle."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - tol:
            continue
        pbh = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.matrix_rank(pbh, tol=1e-9) < n:
            return False
    return True


def solve_dare(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-point iteration of the discrete Riccati equation.

    Returns (P, K) with K = (R + B'PB)^-1 B'PA, i.e. the state feedback u = -K x.
    Convergence is relative: ||P_next - P||_F < tol * max(1, ||P||_F).
    """
    A, B, Q = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape[0] != n or Q.shape != (n, n) or R.shape != (m, m):
        raise LqrError(f"incompatible shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}")
    if not all(np.isfinite(x).all() for x in (A, B, Q, R)):
        raise LqrError("non-finite system matrices")
    if np.any(np.linalg.eigvalsh(0.5 * (R + R.T)) <= 0):
        raise LqrError("R must be positive definite")
    if not _stabilizable(A, B):
        raise LqrError("(A, B) is not stabilizable")

    P = Q.copy()
    for it in range(max_iter):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = A.T @ P @ A - A.T @ P @ B @ gain + Q
        P_next = 0.5 * (P_next + P_next.T)
        if not np.isfinite(P_next).all():
            raise LqrError("Riccati iteration diverged")
        if np.linalg.norm(P_next - P) < tol * max(1.0, np.linalg.norm(P)):
            P = P_next
            break
        P = P_next
    else:
        raise LqrError(f"Riccati iteration did not converge in {max_iter} iterations")

    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = max(abs(np.linalg.eigvals(A - B @ K)))
    if rho >= 1.0:
        raise LqrError(f"closed loop not stable (spectral radius {rho:.6f})")
    LOG.debug("DARE converged after %d iterations, rho=%.4f", it + 1, rho)
    return P, K


@lru_cache(maxsize=32)
def design_gap_controller(dt: float = DT, q: tuple[float, float] = (1.0, 0.5), r: float = 1.0) -> LqrDesign:
    """Gain for the spacing-error model.

    e_s' = e_s + dt*e_v - dt^2/2*u and e_v' = e_v - dt*u, where u is the follower's
    acceleration. Solving with B_u = -[dt^2/2, dt] and u = -K_u x gives u = K x with
    K = -K_u.
    """
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = -np.array([[0.5 * dt * dt], [dt]])
    Q = np.diag(q)
    R = np.array([[r]])
    P, K_u = solve_dare(A, B, Q, R)
    return LqrDesign(A, B, Q, R, P, -K_u.reshape(-1), dt)


def lqr_follow(
    platoon: Sequence[VehicleState],
    design: LqrDesign,
    h_target: float,
    cruise_speed: float,
    limits: DynamicsLimits,
    lead_kp: float = 0.6,
) -> dict[int, float]:
    """Acceleration commands for a single-lane platoon ordered front to back by `s`."""
    ordered = sorted(platoon, key=lambda v: (-v.s, v.id))
    if not ordered:
        return {}
    if len({v.lane for v in ordered}) != 1:
        raise LqrError("platoon is not in a single lane")
    lead = ordered[0]
    out = {lead.id: limits.clamp_accel(lead_kp * (cruise_speed - lead.v))}
    for ahead, veh in zip(ordered, ordered[1:]):
        gap = (ahead.s - veh.s) - 0.5 * (ahead.length + veh.length)
        out[veh.id] = limits.clamp_accel(design.accel(GapState(gap - h_target, ahead.v - veh.v)))
    return out
