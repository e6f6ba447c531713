"""Demonstration collection.

Command sources (scripted expert, keyboard, web) all emit the same
``TeleopCommand``; the record loop converts commands to joint actions via
IK and appends one observation row and one action row per step, so
episodes from every source share one schema. A missing poll result means
"hold everything", which keeps the time base uniform across sources.
"""

from __future__ import annotations

import select
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import Action, EnvSpec, Environment, JOINT_DELTA_LIMIT, State
from .datastore import Dataset, Episode, to_relative
from .errors import InvariantViolation
from .rng import STREAM_EXPERT, make_rng
from .sim2d.kinematics import arm_chain, ee_poses, fk, ik, joint_slice
from .sim2d.tasks import ROPE_TIP, TaskId, goal_for

EE_DELTA_LIMIT = 0.05
REACH_MARGIN = 1e-6
EXPERT_SPEED = 0.05
EXPERT_NOISE = 0.005
EXPERT_APPROACH_TOL = 0.03
KEY_STEP = 0.04


@dataclass
class TeleopCommand:
    """One end-effector-space command from any teleop device."""

    ee_delta: np.ndarray                     # (2,), clamped to 0.05 norm
    grip: str = "hold"                       # "open" | "close" | "hold"
    base_delta: Optional[np.ndarray] = None  # (2,), mobile embodiments
    arm_select: int = 0

    def __post_init__(self):
        self.ee_delta = np.asarray(self.ee_delta, dtype=np.float64)
        if self.grip not in ("open", "close", "hold"):
            raise ValueError(f"unknown grip {self.grip!r}")
        if self.base_delta is not None:
            self.base_delta = np.asarray(self.base_delta, dtype=np.float64)


HOLD = TeleopCommand(ee_delta=np.zeros(2))


class CommandSource(ABC):
    """Non-blocking command stream with session bracketing."""

    name = "scripted"

    def begin(self, env: Environment) -> None:
        pass

    @abstractmethod
    def poll(self) -> Optional[TeleopCommand]:
        """Latest command, or None for 'no new input' (treated as hold)."""

    def end(self) -> None:
        pass

    @property
    def active(self) -> bool:
        return True


def command_to_action(cmd: TeleopCommand, state: State, spec: EnvSpec) -> Action:
    """Resolve an ee-space command into a joint-space action via IK.

    Targets beyond the arm's reach are radially projected just inside the
    reach boundary, so resolution always succeeds.
    """
    arm = cmd.arm_select if 0 <= cmd.arm_select < spec.arm_count else 0
    delta = np.asarray(cmd.ee_delta, dtype=np.float64)
    norm = float(np.linalg.norm(delta))
    if norm > EE_DELTA_LIMIT:
        delta = delta * (EE_DELTA_LIMIT / norm)

    base_delta = np.zeros(2)
    if spec.embodiment == "mobile_arm" and cmd.base_delta is not None:
        base_delta = np.clip(np.asarray(cmd.base_delta, dtype=np.float64),
                             -0.05, 0.05)

    new_base = state.base_pose + base_delta
    chain_now = arm_chain(spec, state.base_pose, arm)
    chain_next = arm_chain(spec, new_base, arm)
    q_now = state.joint_angles[joint_slice(spec, arm)]
    target = fk(chain_now, q_now)[:2] + delta

    origin = np.asarray(chain_next.base[:2])
    dist = float(np.linalg.norm(target - origin))
    limit = chain_next.reach - REACH_MARGIN
    if dist > limit:
        target = origin + (target - origin) * (limit / dist)
    q_new = ik(chain_next, target, q_now)
    dq = np.clip(q_new - q_now, -JOINT_DELTA_LIMIT, JOINT_DELTA_LIMIT)

    values = np.zeros(spec.action_dim)
    sl = joint_slice(spec, arm)
    values[sl.start:sl.stop] = dq
    for g in range(spec.n_grippers):
        if g == arm:
            if cmd.grip == "open":
                grip_target = 1.0
            elif cmd.grip == "close":
                grip_target = 0.0
            else:
                grip_target = float(state.gripper_open[g])
        else:
            grip_target = float(state.gripper_open[g])
        values[spec.n_joints + g] = grip_target
    if spec.embodiment == "mobile_arm":
        values[-2:] = base_delta
    return Action.for_spec(spec, values)


def _toward(ee: np.ndarray, target: np.ndarray, noise: np.ndarray) -> np.ndarray:
    # Proportional approach capped at EXPERT_SPEED: decelerating near the
    # waypoint keeps mistimed phase transitions cheap for chunked policies.
    delta = np.asarray(target, dtype=np.float64) - ee
    dist = float(np.linalg.norm(delta))
    if dist > 1e-12:
        step = min(EXPERT_SPEED, 0.5 * dist + 0.005)
        if dist > step:
            delta = delta * (step / dist)
    return delta + noise


def scripted_expert(task: TaskId, state: State, spec: EnvSpec,
                    rng: np.random.Generator) -> TeleopCommand:
    """Waypoint controller standing in for a human demonstrator.

    Commands point at the current waypoint with speed 0.05 plus uniform
    +-0.005 noise per axis; gripper transitions always pass through the
    open band first so the 0.5 threshold crossing is guaranteed.
    """
    resolved = task.resolved()
    goal = goal_for(resolved)
    ee = ee_poses(state, spec)[0][:2]
    noise = rng.uniform(-EXPERT_NOISE, EXPERT_NOISE, size=2)
    grip_level = float(state.gripper_open[0])
    still = np.zeros(2)
    # Closing from >= 0.5 crosses the grasp threshold next step; from below
    # it, re-open first. Either way the sequence is monotone, never stuck.
    squeeze = "close" if grip_level >= 0.5 else "open"

    if resolved.kind == "pick_place":
        obj = state.objects[0]
        held = any(g is not None and g.kind == "object" and g.index == 0
                   for g in state.grasps)
        if not held:
            if float(np.linalg.norm(obj.position - ee)) <= EXPERT_APPROACH_TOL:
                return TeleopCommand(still, squeeze)
            return TeleopCommand(_toward(ee, obj.position, noise), "open")
        goal_center = np.asarray(goal.center)
        if float(np.linalg.norm(obj.position - goal_center)) <= goal.radius * 0.4:
            return TeleopCommand(still, "open")
        carry_target = goal_center - (obj.position - ee)
        return TeleopCommand(_toward(ee, carry_target, noise), "hold")

    if resolved.kind == "push":
        box = state.objects[0]
        behind_x = box.position[0] - box.half_extent - 0.1
        aligned = abs(ee[1] - box.position[1]) <= 0.02 and ee[0] <= box.position[0]
        if not aligned:
            staging = np.array([behind_x, box.position[1]])
            return TeleopCommand(_toward(ee, staging, noise), "hold")
        ahead = np.array([goal.line_x + box.half_extent + 0.1, box.position[1]])
        return TeleopCommand(_toward(ee, ahead, noise), "hold")

    if resolved.kind == "rope_reach":
        tip = state.rope[ROPE_TIP]
        held = any(g is not None and g.kind == "rope" for g in state.grasps)
        if not held:
            if float(np.linalg.norm(tip - ee)) <= EXPERT_APPROACH_TOL:
                return TeleopCommand(still, squeeze)
            return TeleopCommand(_toward(ee, tip, noise), "open")
        carry_target = np.asarray(goal.center) - (tip - ee)
        return TeleopCommand(_toward(ee, carry_target, noise), "hold")

    raise AssertionError(f"unhandled task {resolved.kind}")


class ScriptedSource(CommandSource):
    """Expert-driven source; deterministic given (task, seed)."""

    name = "scripted"

    def __init__(self, seed: int):
        self._seed = seed
        self._env: Optional[Environment] = None
        self._rng = make_rng(seed, STREAM_EXPERT)

    def begin(self, env: Environment) -> None:
        self._env = env
        self._rng = make_rng(self._seed, STREAM_EXPERT)

    def poll(self) -> Optional[TeleopCommand]:
        env = self._env
        return scripted_expert(env.current_task, env.state, env.spec, self._rng)


class KeyboardSource(CommandSource):
    """Raw-terminal keyboard teleop.

    Arrows move the end effector, space toggles the gripper, WASD drives
    the base, Tab selects the arm, q ends the session. ``read_bytes`` is
    injectable so the decoding logic is testable without a TTY.
    """

    name = "keyboard"

    def __init__(self, read_bytes: Optional[Callable[[], bytes]] = None):
        self._read = read_bytes if read_bytes is not None else self._read_stdin
        self._buffer = b""
        self._grip = "close"   # grippers start closed
        self._arm = 0
        self._active = True
        self._fd_raw = None

    def begin(self, env: Environment) -> None:
        if self._read is self._read_stdin:
            import termios
            import tty
            if not sys.stdin.isatty():
                raise InvariantViolation("keyboard source requires a TTY")
            self._fd_raw = termios.tcgetattr(sys.stdin.fileno())
            tty.setcbreak(sys.stdin.fileno())

    def end(self) -> None:
        if self._fd_raw is not None:
            import termios
            termios.tcsetattr(sys.stdin.fileno(), termios.TCSADRAIN, self._fd_raw)
            self._fd_raw = None

    @property
    def active(self) -> bool:
        return self._active

    @staticmethod
    def _read_stdin() -> bytes:
        chunks = b""
        while select.select([sys.stdin], [], [], 0)[0]:
            chunks += sys.stdin.buffer.read1(64)
        return chunks

    def poll(self) -> Optional[TeleopCommand]:
        self._buffer += self._read()
        ee = np.zeros(2)
        base = np.zeros(2)
        moved = False
        buf = self._buffer
        self._buffer = b""
        i = 0
        while i < len(buf):
            ch = buf[i:i + 1]
            if ch == b"\x1b" and buf[i + 1:i + 2] == b"[":
                code = buf[i + 2:i + 3]
                arrow = {b"A": (0, KEY_STEP), b"B": (0, -KEY_STEP),
                         b"C": (KEY_STEP, 0), b"D": (-KEY_STEP, 0)}.get(code)
                if arrow:
                    ee += arrow
                    moved = True
                i += 3
                continue
            if ch == b" ":
                self._grip = "open" if self._grip == "close" else "close"
                moved = True
            elif ch in (b"w", b"W"):
                base += (0, KEY_STEP); moved = True
            elif ch in (b"s", b"S"):
                base += (0, -KEY_STEP); moved = True
            elif ch in (b"a", b"A"):
                base += (-KEY_STEP, 0); moved = True
            elif ch in (b"d", b"D"):
                base += (KEY_STEP, 0); moved = True
            elif ch in (b"q", b"Q", b"\x1b"):
                self._active = False
            i += 1
        if not moved:
            return None
        return TeleopCommand(ee, self._grip, base_delta=base, arm_select=self._arm)


class EpisodeRecorder:
    """Accumulates (observation, action) rows and assembles an Episode.

    Relative channels are re-derived from the stored absolute channels at
    build time, so recorded files satisfy the abs/rel duality even for
    captures that begin mid-stream.
    """

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self._channel_rows: dict[str, list[np.ndarray]] = \
            {c.name: [] for c in spec.observation_channels}
        self._action_rows: list[np.ndarray] = []

    def __len__(self) -> int:
        return len(self._action_rows)

    def clear(self) -> None:
        for rows in self._channel_rows.values():
            rows.clear()
        self._action_rows.clear()

    def append(self, obs, action: Action) -> None:
        for name, rows in self._channel_rows.items():
            rows.append(obs.channels[name])
        self._action_rows.append(action.values.astype(np.float32))

    def build(self, seed: int, source: str, success: bool) -> Episode:
        if not self._action_rows:
            raise InvariantViolation("session recorded no steps")
        channels = {name: np.stack(rows) for name, rows in self._channel_rows.items()}
        for name in list(channels):
            if name.endswith("_rel"):
                channels[name] = to_relative(channels[name[:-4] + "_abs"])
        return Episode(env_spec=self.spec, channels=channels,
                       actions=np.stack(self._action_rows), seed=seed,
                       source=source, success=success)


def run_session(env: Environment, source: CommandSource, record: bool = True) -> Episode:
    """Drive the env from a command source until done or source exit.

    Appends exactly one action row and one row per channel per step; a
    poll with no command holds everything so the time base stays uniform.
    """
    recorder = EpisodeRecorder(env.spec)
    source.begin(env)
    try:
        while not env.done and source.active:
            obs = env.observation
            cmd = source.poll()
            if cmd is None:
                cmd = HOLD
            action = command_to_action(cmd, env.state, env.spec)
            if record:
                recorder.append(obs, action)
            env.step(action)
    finally:
        source.end()
    return recorder.build(env.episode_seed, source.name, env.succeeded)


def record_dataset(env: Environment, out_dir, episodes: int, base_seed: int,
                   source_factory: Callable[[int], CommandSource],
                   config: Optional[dict] = None) -> Dataset:
    """Collect a seeded batch of episodes into a dataset directory."""
    ds = Dataset.create(out_dir, env.spec, config=config)
    for i in range(episodes):
        seed = base_seed + i
        env.reset(seed)
        ds.add_episode(run_session(env, source_factory(seed)))
    return ds
