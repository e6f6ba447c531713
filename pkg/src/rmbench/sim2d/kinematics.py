"""Planar serial-chain kinematics: forward map, Jacobian, damped IK."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import EnvSpec, State
from ..errors import DimensionMismatch, NoConvergence, Unreachable

IK_DAMPING = 0.1
IK_MAX_ITERS = 100
IK_TOLERANCE = 1e-8     # iteration stop on position error
IK_CONTRACT = 1e-6      # returned solutions are at least this accurate

# Fixed arm mounting offsets per embodiment, added to the (mobile) base pose.
ARM_OFFSETS = {
    "single_arm": (np.array([0.0, 0.0]),),
    "mobile_arm": (np.array([0.0, 0.0]),),
    "bimanual": (np.array([-0.6, 0.0]), np.array([0.6, 0.0])),
}


@dataclass(frozen=True)
class KinematicChain:
    link_lengths: tuple[float, ...]
    base: tuple[float, float, float] = (0.0, 0.0, 0.0)  # (x, y, theta)

    def __post_init__(self):
        if any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")

    @property
    def reach(self) -> float:
        return float(sum(self.link_lengths))


def arm_chain(spec: EnvSpec, base_pose: np.ndarray, arm: int) -> KinematicChain:
    offset = ARM_OFFSETS[spec.embodiment][arm]
    return KinematicChain(spec.link_lengths,
                          (float(base_pose[0] + offset[0]),
                           float(base_pose[1] + offset[1]), 0.0))


def joint_slice(spec: EnvSpec, arm: int) -> slice:
    n = spec.joints_per_arm
    return slice(arm * n, (arm + 1) * n)


def fk(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """End-effector pose (x, y, theta) for joint vector q."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (len(chain.link_lengths),):
        raise DimensionMismatch(f"expected {len(chain.link_lengths)} joints, got {q.shape}")
    angles = chain.base[2] + np.cumsum(q)
    lengths = np.asarray(chain.link_lengths)
    x = chain.base[0] + float(np.sum(lengths * np.cos(angles)))
    y = chain.base[1] + float(np.sum(lengths * np.sin(angles)))
    return np.array([x, y, angles[-1]])


def link_points(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Positions of the base and every joint/tip, shape (n_links+1, 2)."""
    q = np.asarray(q, dtype=np.float64)
    angles = chain.base[2] + np.cumsum(q)
    lengths = np.asarray(chain.link_lengths)
    xs = chain.base[0] + np.concatenate([[0.0], np.cumsum(lengths * np.cos(angles))])
    ys = chain.base[1] + np.concatenate([[0.0], np.cumsum(lengths * np.sin(angles))])
    return np.stack([xs, ys], axis=1)


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Position Jacobian, shape (2, n_joints)."""
    q = np.asarray(q, dtype=np.float64)
    angles = chain.base[2] + np.cumsum(q)
    lengths = np.asarray(chain.link_lengths)
    # d(ee)/d(q_j) sums contributions of links j..n-1.
    sx = np.cumsum((lengths * -np.sin(angles))[::-1])[::-1]
    sy = np.cumsum((lengths * np.cos(angles))[::-1])[::-1]
    return np.stack([sx, sy])


def ee_poses(state: State, spec: EnvSpec) -> list[np.ndarray]:
    """End-effector pose per arm for the current state."""
    return [fk(arm_chain(spec, state.base_pose, a),
               state.joint_angles[joint_slice(spec, a)])
            for a in range(spec.arm_count)]


def _two_link_solution(chain: KinematicChain, target: np.ndarray,
                       q_init: np.ndarray) -> np.ndarray | None:
    """Analytic solution treating links 2..n as one rigid segment.

    Exact for any target in the grouped annulus; used when the damped
    iteration stalls (it creeps near the reach boundary, where the radial
    singular value vanishes). Picks the elbow sign closer to q_init.
    """
    lengths = np.asarray(chain.link_lengths)
    if len(lengths) < 2:
        v = target - np.asarray(chain.base[:2])
        if abs(np.linalg.norm(v) - lengths[0]) > IK_CONTRACT:
            return None
        return np.array([np.arctan2(v[1], v[0]) - chain.base[2]])
    l1 = float(lengths[0])
    l2 = float(np.sum(lengths[1:]))
    v = target - np.asarray(chain.base[:2])
    d2 = float(v @ v)
    c = (d2 - l1 * l1 - l2 * l2) / (2 * l1 * l2)
    if not -1.0 - 1e-12 <= c <= 1.0 + 1e-12:
        return None
    c = float(np.clip(c, -1.0, 1.0))
    best = None
    for elbow in (np.arccos(c), -np.arccos(c)):
        q1 = np.arctan2(v[1], v[0]) - np.arctan2(l2 * np.sin(elbow), l1 + l2 * np.cos(elbow))
        q = np.zeros(len(lengths))
        q[0] = q1 - chain.base[2]
        q[1] = elbow
        dist = np.linalg.norm(np.arctan2(np.sin(q - q_init), np.cos(q - q_init)))
        if best is None or dist < best[0]:
            best = (dist, q)
    return best[1]


def ik(chain: KinematicChain, target: np.ndarray, q_init: np.ndarray) -> np.ndarray:
    """Solve joints for a 2-D end-effector target via damped least squares.

    Raises Unreachable when the target lies outside the reach disc, and
    NoConvergence (with the residual) when no solution within tolerance
    is found.
    """
    target = np.asarray(target, dtype=np.float64)
    base_xy = np.asarray(chain.base[:2])
    d = float(np.linalg.norm(target - base_xy))
    if d > chain.reach + 1e-12:
        raise Unreachable(f"target at distance {d:.6f} exceeds reach {chain.reach:.6f}")

    q = np.asarray(q_init, dtype=np.float64).copy()
    if q.shape != (len(chain.link_lengths),):
        raise DimensionMismatch("q_init length mismatch")
    lam2 = IK_DAMPING ** 2
    err = target - fk(chain, q)[:2]
    for _ in range(IK_MAX_ITERS):
        if np.linalg.norm(err) < IK_TOLERANCE:
            return q
        J = jacobian(chain, q)
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(2), err)
        q = q + dq
        err = target - fk(chain, q)[:2]
    residual = float(np.linalg.norm(err))
    if residual < IK_CONTRACT:
        return q
    analytic = _two_link_solution(chain, target, q)
    if analytic is not None:
        err = target - fk(chain, analytic)[:2]
        if np.linalg.norm(err) < IK_CONTRACT:
            return analytic
        residual = min(residual, float(np.linalg.norm(err)))
    raise NoConvergence("ik did not converge", residual)
