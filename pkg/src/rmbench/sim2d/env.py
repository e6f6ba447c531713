"""Planar environment: ties the step function, tasks, and observation
pipeline into the abstract environment interface, and registers the
built-in task environments.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import (Action, ChannelSpec, EnvSpec, Environment, Observation,
                    State, StepResult, quantize, register_env)
from ..errors import EpisodeFinished, NotReset
from ..rng import STREAM_RESET, make_rng
from . import tasks
from .dynamics import simulate_step
from .kinematics import arm_chain, ee_poses, ik
from .render import render_image, sample_point_cloud
from .tasks import TaskId

_MASK64 = (1 << 64) - 1


def default_channels(embodiment: str, joints_per_arm: int, arm_count: int,
                     image_size: int, n_points: int,
                     with_task_id: bool) -> tuple[ChannelSpec, ...]:
    n_joints = joints_per_arm * arm_count
    chans = [
        ChannelSpec("joint_pos_abs", "f32", (n_joints,), "absolute"),
        ChannelSpec("joint_pos_rel", "f32", (n_joints,), "relative"),
        ChannelSpec("ee_pose_abs", "f32", (3 * arm_count,), "absolute"),
        ChannelSpec("ee_pose_rel", "f32", (3 * arm_count,), "relative"),
        ChannelSpec("gripper", "f32", (arm_count,), "none"),
        ChannelSpec("wrench", "f32", (2 * arm_count,), "none"),
        ChannelSpec("image", "u8", (image_size, image_size, 3), "none"),
        ChannelSpec("point_cloud", "f32", (n_points, 2), "none"),
    ]
    if embodiment == "mobile_arm":
        chans += [ChannelSpec("base_pose_abs", "f32", (2,), "absolute"),
                  ChannelSpec("base_pose_rel", "f32", (2,), "relative")]
    if with_task_id:
        chans.append(ChannelSpec("task_id", "i32", (1,), "none"))
    return tuple(chans)


class PlanarEnv(Environment):
    """Deterministic planar manipulation environment."""

    def __init__(self, spec: EnvSpec):
        self._spec = spec
        self._state: Optional[State] = None
        self._done = False
        self._seed = 0
        self._task = spec.task
        self._prev_abs: dict[str, np.ndarray] = {}
        self._last_obs: Optional[Observation] = None

    @property
    def spec(self) -> EnvSpec:
        return self._spec

    @property
    def state(self) -> State:
        if self._state is None:
            raise NotReset("environment has not been reset")
        return self._state

    @property
    def done(self) -> bool:
        return self._done

    @property
    def current_task(self) -> TaskId:
        return self._task

    @property
    def episode_seed(self) -> int:
        return self._seed

    @property
    def observation(self) -> Observation:
        """The most recent observation (from reset or the last step)."""
        if self._last_obs is None:
            raise NotReset("environment has not been reset")
        return self._last_obs

    @property
    def succeeded(self) -> bool:
        return self._state is not None and tasks.success(self._state, self._task)

    def reset(self, seed: int) -> Observation:
        spec = self._spec
        # The composite task cycles its sub-task with the seed so one
        # dataset covers all sub-tasks; the task_id channel tracks it.
        if spec.task.kind == "multi_task":
            self._task = TaskId("multi_task", seed % 3)
        else:
            self._task = spec.task
        scene = tasks.scene_for(self._task)
        rng = make_rng(seed, STREAM_RESET)

        objects = scene.make_objects()
        for obj in objects:
            obj.position = obj.position + self._disc_sample(rng)
        rope = scene.make_rope()
        if rope is not None:
            rope = rope + self._disc_sample(rng)[None, :]

        base = np.zeros(2)
        joints = np.zeros(spec.n_joints)
        for a in range(spec.arm_count):
            chain = arm_chain(spec, base, a)
            target = np.array(chain.base[:2]) + np.asarray(scene.home_local)
            q0 = ik(chain, target, np.full(spec.joints_per_arm, 0.5))
            joints[a * spec.joints_per_arm:(a + 1) * spec.joints_per_arm] = q0

        self._state = State(
            t=0,
            joint_angles=joints,
            gripper_open=np.zeros(spec.n_grippers),
            base_pose=base,
            objects=objects,
            rope=rope,
            grasps=[None] * spec.n_grippers,
        )
        self._seed = seed
        self._done = False
        self._prev_abs = {}
        return self._build_observation(np.zeros((spec.arm_count, 2)))

    def step(self, action: Action) -> StepResult:
        if self._state is None:
            raise NotReset("call reset before step")
        if self._done:
            raise EpisodeFinished("episode is finished; call reset")
        self._state, wrench = simulate_step(self._state, action, self._spec)
        succeeded = tasks.success(self._state, self._task)
        self._done = succeeded or self._state.t >= self._spec.max_steps
        return StepResult(self._build_observation(wrench), succeeded, self._done)

    def _disc_sample(self, rng: np.random.Generator) -> np.ndarray:
        radius = self._spec.randomization_radius * np.sqrt(rng.uniform())
        angle = 2 * np.pi * rng.uniform()
        return radius * np.array([np.cos(angle), np.sin(angle)])

    def _abs_values(self) -> dict[str, np.ndarray]:
        s = self._state
        out = {
            "joint_pos_abs": quantize(s.joint_angles),
            "ee_pose_abs": quantize(np.concatenate(ee_poses(s, self._spec))),
        }
        if self._spec.embodiment == "mobile_arm":
            out["base_pose_abs"] = quantize(s.base_pose)
        return out

    def _build_observation(self, wrench: np.ndarray) -> Observation:
        spec = self._spec
        s = self._state
        abs_now = self._abs_values()
        channels: dict[str, np.ndarray] = {}
        for cs in spec.observation_channels:
            if cs.name in abs_now:
                channels[cs.name] = abs_now[cs.name].astype(cs.np_dtype)
            elif cs.name.endswith("_rel"):
                abs_name = cs.name[:-4] + "_abs"
                prev = self._prev_abs.get(abs_name)
                rel = np.zeros_like(abs_now[abs_name]) if prev is None \
                    else abs_now[abs_name] - prev
                channels[cs.name] = rel.astype(cs.np_dtype)
            elif cs.name == "gripper":
                channels[cs.name] = quantize(s.gripper_open).astype(cs.np_dtype)
            elif cs.name == "wrench":
                channels[cs.name] = wrench.reshape(-1).astype(cs.np_dtype)
            elif cs.name == "image":
                channels[cs.name] = render_image(s, spec, width=cs.shape[1],
                                                 height=cs.shape[0], task=self._task)
            elif cs.name == "point_cloud":
                step_seed = (self._seed * 2654435761 + s.t) & _MASK64
                channels[cs.name] = sample_point_cloud(s, cs.shape[0], step_seed)
            elif cs.name == "task_id":
                channels[cs.name] = np.array([self._task.sub_task or 0], dtype=cs.np_dtype)
            else:
                raise KeyError(f"no producer for channel {cs.name!r}")
        self._prev_abs = abs_now
        self._last_obs = Observation(channels)
        return self._last_obs


_BUILTINS = {
    "pick_place": (TaskId("pick_place"), "single_arm"),
    "push": (TaskId("push"), "single_arm"),
    "rope_reach": (TaskId("rope_reach"), "single_arm"),
    "multi_task": (TaskId("multi_task", 0), "single_arm"),
    "pick_place_bimanual": (TaskId("pick_place"), "bimanual"),
    "pick_place_mobile": (TaskId("pick_place"), "mobile_arm"),
}


def default_spec(env_id: str, *, randomization_radius: float = 0.1,
                 max_steps: int = 300, link_lengths: tuple[float, ...] = (1.0, 1.0),
                 image_size: int = 64, n_points: int = 32,
                 control_hz: float = 20.0) -> EnvSpec:
    """Default spec for a built-in environment id."""
    task, embodiment = _BUILTINS[env_id]
    arm_count = 2 if embodiment == "bimanual" else 1
    action_dim = arm_count * len(link_lengths) + arm_count
    if embodiment == "mobile_arm":
        action_dim += 2
    return EnvSpec(
        env_id=env_id,
        embodiment=embodiment,
        link_lengths=tuple(link_lengths),
        task=task,
        action_dim=action_dim,
        observation_channels=default_channels(
            embodiment, len(link_lengths), arm_count, image_size, n_points,
            with_task_id=task.kind == "multi_task"),
        max_steps=max_steps,
        control_hz=control_hz,
        randomization_radius=randomization_radius,
    )


def _builtin_factory(env_id: str):
    def factory(spec: Optional[EnvSpec] = None, **overrides) -> PlanarEnv:
        return PlanarEnv(spec if spec is not None else default_spec(env_id, **overrides))
    return factory


for _env_id in _BUILTINS:
    register_env(_env_id, _builtin_factory(_env_id))
