"""Deterministic planar kinematic simulator."""

from .dynamics import (CONTACT_STIFFNESS, GRASP_RADIUS, PBD_ITERATIONS,
                       project_rope, simulate_step)
from .env import PlanarEnv, default_channels, default_spec
from .kinematics import (KinematicChain, arm_chain, ee_poses, fk, ik,
                         jacobian, link_points)
from .render import render_image, sample_point_cloud
from .tasks import (ROPE_PARTICLES, ROPE_REST_LENGTH, ROPE_TIP, Goal, TaskId,
                    TaskScene, goal_for, scene_for, success)

__all__ = [
    "CONTACT_STIFFNESS", "GRASP_RADIUS", "PBD_ITERATIONS", "project_rope",
    "simulate_step", "PlanarEnv", "default_channels", "default_spec",
    "KinematicChain", "arm_chain", "ee_poses", "fk", "ik", "jacobian",
    "link_points", "render_image", "sample_point_cloud", "ROPE_PARTICLES",
    "ROPE_REST_LENGTH", "ROPE_TIP", "Goal", "TaskId", "TaskScene", "goal_for",
    "scene_for", "success",
]
