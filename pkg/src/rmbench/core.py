"""Environment abstraction and shared data model.

A task environment exposes the classic reset/step interface over a state
space, an action space, and a transition function. Everything downstream
(recording, training, evaluation) is written against the abstract
:class:`Environment`, so new simulators plug in by subclassing it and
registering a factory.

Observations are multimodal channel maps. Paired ``*_abs`` / ``*_rel``
channels store absolute values and per-step differences independently;
kinematic channels are quantized to a 2**-16 grid so that the stored f32
relative channel reconstructs the absolute channel exactly (see
``datastore.to_absolute``).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from .errors import DimensionMismatch, DuplicateId, UnknownId

if TYPE_CHECKING:
    from .sim2d.tasks import TaskId

EMBODIMENTS = ("single_arm", "bimanual", "mobile_arm")
CHANNEL_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1"), "i32": np.dtype("<i4")}
ENCODINGS = ("absolute", "relative", "none")

# Per-step action bounds. Out-of-range commands are clamped, never rejected,
# so teleop and policy outputs cannot crash an episode.
JOINT_DELTA_LIMIT = 0.2    # rad
BASE_DELTA_LIMIT = 0.05    # env-units
GRIPPER_RATE = 0.25        # max gripper travel per step

# Observed kinematic values are rounded to this grid before being cast to
# f32. Grid multiples below 256 and their differences are exactly
# representable in f32, which makes the abs/rel duality exact.
OBS_GRID = 2.0 ** -16


def quantize(x: np.ndarray | float) -> np.ndarray:
    """Round to the observation grid (in f64)."""
    return np.round(np.asarray(x, dtype=np.float64) / OBS_GRID) * OBS_GRID


@dataclass(frozen=True)
class ChannelSpec:
    """Schema of one observation channel."""

    name: str
    dtype: str
    shape: tuple[int, ...]
    encoding: str = "none"

    def __post_init__(self):
        if self.dtype not in CHANNEL_DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.name.endswith("_rel") and self.encoding != "relative":
            raise ValueError(f"channel {self.name!r} must use relative encoding")
        if self.name.endswith("_abs") and self.encoding != "absolute":
            raise ValueError(f"channel {self.name!r} must use absolute encoding")
        if int(np.prod(self.shape)) < 1:
            raise ValueError(f"channel {self.name!r} has empty shape")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def np_dtype(self) -> np.dtype:
        return CHANNEL_DTYPES[self.dtype]

    def to_dict(self) -> dict:
        return {"name": self.name, "dtype": self.dtype,
                "shape": list(self.shape), "encoding": self.encoding}

    @staticmethod
    def from_dict(d: dict) -> "ChannelSpec":
        return ChannelSpec(d["name"], d["dtype"], tuple(d["shape"]), d["encoding"])


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment instance."""

    env_id: str
    embodiment: str
    link_lengths: tuple[float, ...]
    task: "TaskId"
    action_dim: int
    observation_channels: tuple[ChannelSpec, ...]
    max_steps: int
    control_hz: float = 20.0
    randomization_radius: float = 0.0

    def __post_init__(self):
        if self.embodiment not in EMBODIMENTS:
            raise ValueError(f"unknown embodiment {self.embodiment!r}")
        object.__setattr__(self, "link_lengths", tuple(float(l) for l in self.link_lengths))
        if any(l <= 0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.randomization_radius < 0:
            raise ValueError("randomization_radius must be >= 0")
        names = [c.name for c in self.observation_channels]
        if len(set(names)) != len(names):
            raise ValueError("duplicate channel names")
        expected = self.arm_count * len(self.link_lengths) + self.n_grippers
        if self.embodiment == "mobile_arm":
            expected += 2
        if self.action_dim != expected:
            raise ValueError(f"action_dim {self.action_dim} != expected {expected}")

    @property
    def arm_count(self) -> int:
        return 2 if self.embodiment == "bimanual" else 1

    @property
    def joints_per_arm(self) -> int:
        return len(self.link_lengths)

    @property
    def n_joints(self) -> int:
        return self.arm_count * self.joints_per_arm

    @property
    def n_grippers(self) -> int:
        return self.arm_count

    def channel(self, name: str) -> ChannelSpec:
        for c in self.observation_channels:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "embodiment": self.embodiment,
            "link_lengths": list(self.link_lengths),
            "task": self.task.to_dict(),
            "action_dim": self.action_dim,
            "observation_channels": [c.to_dict() for c in self.observation_channels],
            "max_steps": self.max_steps,
            "control_hz": self.control_hz,
            "randomization_radius": self.randomization_radius,
        }

    @staticmethod
    def from_dict(d: dict) -> "EnvSpec":
        from .sim2d.tasks import TaskId
        return EnvSpec(
            env_id=d["env_id"],
            embodiment=d["embodiment"],
            link_lengths=tuple(d["link_lengths"]),
            task=TaskId.from_dict(d["task"]),
            action_dim=int(d["action_dim"]),
            observation_channels=tuple(ChannelSpec.from_dict(c) for c in d["observation_channels"]),
            max_steps=int(d["max_steps"]),
            control_hz=float(d["control_hz"]),
            randomization_radius=float(d["randomization_radius"]),
        )


@dataclass
class ObjectState:
    """A box or disc in the scene with its goal region."""

    position: np.ndarray          # (2,)
    half_extent: float            # box half side / disc radius
    kind: str                     # "box" | "disc"
    goal_region: tuple[np.ndarray, float]  # (center (2,), radius)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")
        if self.kind not in ("box", "disc"):
            raise ValueError(f"unknown object kind {self.kind!r}")
        center, radius = self.goal_region
        if radius <= 0:
            raise ValueError("goal radius must be positive")
        self.goal_region = (np.asarray(center, dtype=np.float64), float(radius))

    def copy(self) -> "ObjectState":
        return ObjectState(self.position.copy(), self.half_extent, self.kind,
                           (self.goal_region[0].copy(), self.goal_region[1]))


@dataclass
class Grasp:
    """Attachment of a gripper to an object or the rope tip."""

    kind: str               # "object" | "rope"
    index: int              # object index, or rope particle index
    offset: np.ndarray      # grasped point minus ee position, held constant


@dataclass
class State:
    """Full simulator state at one step."""

    t: int
    joint_angles: np.ndarray           # (n_joints,) concatenated per arm
    gripper_open: np.ndarray           # (n_grippers,) in [0, 1]
    base_pose: np.ndarray              # (2,) env-units; fixed origin unless mobile
    objects: list[ObjectState]
    rope: Optional[np.ndarray] = None  # (P, 2) particle positions
    grasps: list[Optional[Grasp]] = field(default_factory=list)

    @property
    def grasped_object(self) -> list[Optional[int]]:
        """Object index held by each gripper (None for free or rope grasps)."""
        return [g.index if g is not None and g.kind == "object" else None
                for g in self.grasps]

    def copy(self) -> "State":
        return State(
            t=self.t,
            joint_angles=self.joint_angles.copy(),
            gripper_open=self.gripper_open.copy(),
            base_pose=self.base_pose.copy(),
            objects=[o.copy() for o in self.objects],
            rope=None if self.rope is None else self.rope.copy(),
            grasps=[None if g is None else Grasp(g.kind, g.index, g.offset.copy())
                    for g in self.grasps],
        )


def action_semantics(spec: EnvSpec) -> tuple[str, ...]:
    """Per-index meaning of the action vector.

    Layout: joint deltas for every arm, then one gripper target per arm,
    then (dx, dy) base deltas for mobile embodiments.
    """
    sem = ["joint_delta"] * spec.n_joints + ["gripper_target"] * spec.n_grippers
    if spec.embodiment == "mobile_arm":
        sem += ["base_delta", "base_delta"]
    return tuple(sem)


def clamp_action_values(values: np.ndarray, spec: EnvSpec) -> np.ndarray:
    """Clamp raw action values to the per-semantic bounds."""
    out = np.asarray(values, dtype=np.float64).copy()
    for i, sem in enumerate(action_semantics(spec)):
        if sem == "joint_delta":
            out[i] = np.clip(out[i], -JOINT_DELTA_LIMIT, JOINT_DELTA_LIMIT)
        elif sem == "gripper_target":
            out[i] = np.clip(out[i], 0.0, 1.0)
        else:
            out[i] = np.clip(out[i], -BASE_DELTA_LIMIT, BASE_DELTA_LIMIT)
    return out


@dataclass
class Action:
    """Action vector plus its per-index semantics."""

    values: np.ndarray
    semantics: tuple[str, ...]

    @staticmethod
    def for_spec(spec: EnvSpec, values: np.ndarray) -> "Action":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (spec.action_dim,):
            raise DimensionMismatch(
                f"action length {values.shape} != ({spec.action_dim},)")
        return Action(values, action_semantics(spec))

    @staticmethod
    def zeros(spec: EnvSpec) -> "Action":
        return Action.for_spec(spec, np.zeros(spec.action_dim))


@dataclass
class Observation:
    """Channel name -> tensor, matching the EnvSpec channel table."""

    channels: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]


@dataclass
class StepResult:
    observation: Observation
    success: bool
    done: bool


class Environment(ABC):
    """Abstract task environment; one instance runs one episode at a time.

    Instances are single-threaded: callers hold exclusive access during an
    episode. Distinct instances are independent.
    """

    @property
    @abstractmethod
    def spec(self) -> EnvSpec: ...

    @property
    @abstractmethod
    def state(self) -> State: ...

    @property
    @abstractmethod
    def done(self) -> bool: ...

    @abstractmethod
    def reset(self, seed: int) -> Observation: ...

    @abstractmethod
    def step(self, action: Action) -> StepResult: ...


EnvFactory = Callable[[Optional[EnvSpec]], Environment]

_REGISTRY: dict[str, EnvFactory] = {}


def register_env(env_id: str, factory: EnvFactory) -> None:
    """Register a factory; duplicate ids are rejected."""
    if env_id in _REGISTRY:
        raise DuplicateId(f"environment {env_id!r} already registered")
    _REGISTRY[env_id] = factory


def make_env(env_id: str, spec: Optional[EnvSpec] = None, **overrides) -> Environment:
    """Instantiate a registered environment.

    ``overrides`` (e.g. randomization_radius, max_steps) are applied to the
    factory's default spec when ``spec`` is not given.
    """
    # Built-in environments register on first import of the simulator.
    from . import sim2d  # noqa: F401
    if env_id not in _REGISTRY:
        raise UnknownId(f"unknown environment {env_id!r}")
    if spec is not None and overrides:
        raise ValueError("pass either spec or overrides, not both")
    if overrides:
        return _REGISTRY[env_id](None, **overrides)
    return _REGISTRY[env_id](spec)


def registered_envs() -> list[str]:
    from . import sim2d  # noqa: F401
    return sorted(_REGISTRY)
