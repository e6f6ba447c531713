"""Kinematic step function: integration, grasping, pushing, rope projection.

All motion is kinematic and deterministic. Grippers attach on a downward
crossing of the 0.5 opening threshold and release on an upward crossing,
which gives grasp/release hysteresis for free. The rope is a chain of
particles kept at rest length by position-based distance projection.
"""

from __future__ import annotations

import numpy as np

from ..core import (Action, EnvSpec, Grasp, GRIPPER_RATE, State,
                    clamp_action_values)
from ..errors import DimensionMismatch
from .kinematics import arm_chain, fk, joint_slice
from .tasks import ROPE_REST_LENGTH, ROPE_TIP

GRASP_RADIUS = 0.12
CONTACT_STIFFNESS = 50.0
# Projection sweeps: at least PBD_ITERATIONS, then continue until every gap
# is within PBD_TOLERANCE of rest length. A fixed 10 sweeps provably lags
# behind a sustained 0.05/step tip drag (gaps drift past +-5%), so the
# length invariant, not the sweep count, terminates the loop.
PBD_ITERATIONS = 10
PBD_TOLERANCE = 0.01
PBD_MAX_ITERATIONS = 300
GRIP_THRESHOLD = 0.5


def _object_penetration(ee: np.ndarray, obj) -> tuple[float, np.ndarray] | None:
    """Penetration depth and outward normal (object -> ee), or None."""
    offset = ee - obj.position
    if obj.kind == "disc":
        dist = float(np.linalg.norm(offset))
        pen = obj.half_extent - dist
        if pen <= 0:
            return None
        if dist < 1e-12:
            return None  # degenerate: ee exactly at center, no defined normal
        return pen, offset / dist
    pen_x = obj.half_extent - abs(offset[0])
    pen_y = obj.half_extent - abs(offset[1])
    if pen_x <= 0 or pen_y <= 0:
        return None
    if pen_x <= pen_y:
        normal = np.array([np.sign(offset[0]) or 1.0, 0.0])
        return pen_x, normal
    normal = np.array([0.0, np.sign(offset[1]) or 1.0])
    return pen_y, normal


def project_rope(rope: np.ndarray, pinned: set[int],
                 iterations: int = PBD_ITERATIONS,
                 rest_length: float = ROPE_REST_LENGTH,
                 tolerance: float = PBD_TOLERANCE,
                 max_iterations: int = PBD_MAX_ITERATIONS) -> np.ndarray:
    """Distance-constraint projection; pinned particles never move.

    Violated pairs move each free endpoint half the correction (the full
    correction when the other end is pinned). Sweeps run at least
    ``iterations`` times and stop once every gap is within ``tolerance``
    of rest length.
    """
    p = rope.copy()
    inv_mass = np.array([0.0 if i in pinned else 1.0 for i in range(len(p))])
    for sweep in range(max_iterations):
        for i in range(len(p) - 1):
            w1, w2 = inv_mass[i], inv_mass[i + 1]
            wsum = w1 + w2
            if wsum == 0.0:
                continue
            delta = p[i + 1] - p[i]
            dist = float(np.linalg.norm(delta))
            if dist < 1e-12:
                continue
            corr = (dist - rest_length) / dist * delta
            p[i] += (w1 / wsum) * corr
            p[i + 1] -= (w2 / wsum) * corr
        if sweep + 1 >= iterations:
            gaps = np.linalg.norm(np.diff(p, axis=0), axis=1)
            if np.max(np.abs(gaps - rest_length)) <= tolerance * rest_length:
                break
    return p


def simulate_step(state: State, action: Action, spec: EnvSpec) -> tuple[State, np.ndarray]:
    """Advance the state by one step; returns (next_state, wrench per arm).

    The wrench is the reaction force on each end-effector from un-grasped
    object contact, measured before pushed boxes yield.
    """
    if action.values.shape != (spec.action_dim,):
        raise DimensionMismatch(
            f"action length {action.values.shape[0]} != {spec.action_dim}")
    values = clamp_action_values(action.values, spec)
    s = state.copy()
    s.t = state.t + 1
    if not s.grasps:
        s.grasps = [None] * spec.n_grippers

    old_ee = [fk(arm_chain(spec, state.base_pose, a),
                 state.joint_angles[joint_slice(spec, a)])[:2]
              for a in range(spec.arm_count)]

    # 1. integrate joint and base deltas
    for a in range(spec.arm_count):
        sl = joint_slice(spec, a)
        s.joint_angles[sl] = s.joint_angles[sl] + values[sl.start:sl.stop]
    if spec.embodiment == "mobile_arm":
        s.base_pose = s.base_pose + values[-2:]

    # 2. gripper servo toward target
    old_grip = state.gripper_open.copy()
    targets = values[spec.n_joints:spec.n_joints + spec.n_grippers]
    delta = np.clip(targets - s.gripper_open, -GRIPPER_RATE, GRIPPER_RATE)
    s.gripper_open = s.gripper_open + delta

    new_ee = [fk(arm_chain(spec, s.base_pose, a),
                 s.joint_angles[joint_slice(spec, a)])[:2]
              for a in range(spec.arm_count)]

    # 3. grasp / release on threshold crossings
    for g in range(spec.n_grippers):
        closed_now = old_grip[g] >= GRIP_THRESHOLD > s.gripper_open[g]
        opened_now = old_grip[g] <= GRIP_THRESHOLD < s.gripper_open[g]
        if opened_now and s.grasps[g] is not None:
            s.grasps[g] = None
        elif closed_now and s.grasps[g] is None:
            held = {gr.index for gr in s.grasps if gr is not None and gr.kind == "object"}
            rope_held = any(gr is not None and gr.kind == "rope" for gr in s.grasps)
            candidates: list[tuple[float, int, str, int]] = []
            for i, obj in enumerate(s.objects):
                if i in held:
                    continue
                dist = float(np.linalg.norm(new_ee[g] - obj.position))
                if dist <= GRASP_RADIUS:
                    candidates.append((dist, i, "object", i))
            if s.rope is not None and not rope_held:
                dist = float(np.linalg.norm(new_ee[g] - s.rope[ROPE_TIP]))
                if dist <= GRASP_RADIUS:
                    candidates.append((dist, len(s.objects), "rope", ROPE_TIP))
            if candidates:
                candidates.sort(key=lambda c: (c[0], c[1]))
                _, _, kind, index = candidates[0]
                anchor = s.objects[index].position if kind == "object" else s.rope[index]
                s.grasps[g] = Grasp(kind, index, anchor - new_ee[g])

    # 4. attached bodies follow the ee
    for g, grasp in enumerate(s.grasps):
        if grasp is None:
            continue
        if grasp.kind == "object":
            s.objects[grasp.index].position = new_ee[g] + grasp.offset
        else:
            s.rope[grasp.index] = new_ee[g] + grasp.offset

    # 5. contact: wrench from penetration, then pushed boxes yield
    wrench = np.zeros((spec.arm_count, 2))
    grasped_objects = {gr.index for gr in s.grasps if gr is not None and gr.kind == "object"}
    for a in range(spec.arm_count):
        motion = new_ee[a] - old_ee[a]
        for i, obj in enumerate(s.objects):
            if i in grasped_objects:
                continue
            hit = _object_penetration(new_ee[a], obj)
            if hit is None:
                continue
            pen, normal_out = hit
            wrench[a] += pen * CONTACT_STIFFNESS * normal_out
            if obj.kind == "box":
                push = float(motion @ -normal_out)  # along ee->object direction
                if push > 0:
                    obj.position = obj.position - push * normal_out

    # 6. rope relaxation with grasped tips pinned
    if s.rope is not None:
        pinned = {gr.index for gr in s.grasps if gr is not None and gr.kind == "rope"}
        s.rope = project_rope(s.rope, pinned)

    return s, wrench
