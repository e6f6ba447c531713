"""Task definitions: scenes, goals, and success predicates.

Tasks are desk-scale planar manipulation problems over canonical shapes:
carry a disc to a goal region, push a box past a goal line, drag a rope
tip into a goal region, plus a composite task that cycles through the
three and exposes the active sub-task index as an observation channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import ObjectState

TASK_KINDS = ("pick_place", "push", "rope_reach", "multi_task")
SUB_TASKS = ("pick_place", "push", "rope_reach")

ROPE_PARTICLES = 12
ROPE_REST_LENGTH = 0.1
ROPE_TIP = 0  # graspable particle; success is measured on it

WORKSPACE_HALF_EXTENT = 2.5


@dataclass(frozen=True)
class TaskId:
    kind: str
    sub_task: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task {self.kind!r}")
        if (self.sub_task is not None) != (self.kind == "multi_task"):
            raise ValueError("sub_task present iff multi_task")
        if self.sub_task is not None and self.sub_task not in (0, 1, 2):
            raise ValueError("sub_task must be in {0, 1, 2}")

    def resolved(self) -> "TaskId":
        """The primitive task this id denotes (identity for primitives)."""
        if self.kind == "multi_task":
            return TaskId(SUB_TASKS[self.sub_task])
        return self

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sub_task": self.sub_task}

    @staticmethod
    def from_dict(d: dict) -> "TaskId":
        return TaskId(d["kind"], d.get("sub_task"))


@dataclass(frozen=True)
class Goal:
    """Disc goal region, or a vertical goal line at x = center[0]."""

    kind: str                 # "disc" | "line"
    center: tuple[float, float]
    radius: float

    @property
    def line_x(self) -> float:
        return self.center[0]


@dataclass(frozen=True)
class TaskScene:
    """Nominal scene content; object start positions get randomized at reset."""

    goal: Goal
    objects: tuple[dict, ...] = ()               # kwargs for ObjectState
    rope_tip: Optional[tuple[float, float]] = None
    rope_direction: tuple[float, float] = (1.0, 0.0)
    home_local: tuple[float, float] = (0.4, 1.6)  # initial ee target, arm frame

    def make_objects(self) -> list[ObjectState]:
        return [ObjectState(position=np.array(o["position"]),
                            half_extent=o["half_extent"],
                            kind=o["kind"],
                            goal_region=(np.array(o["goal"]), o["goal_radius"]))
                for o in self.objects]

    def make_rope(self) -> Optional[np.ndarray]:
        if self.rope_tip is None:
            return None
        tip = np.asarray(self.rope_tip, dtype=np.float64)
        direction = np.asarray(self.rope_direction, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        steps = np.arange(ROPE_PARTICLES)[:, None] * ROPE_REST_LENGTH
        return tip[None, :] + steps * direction[None, :]


SCENES: dict[str, TaskScene] = {
    "pick_place": TaskScene(
        goal=Goal("disc", (0.8, -0.9), 0.15),
        objects=({"position": (1.2, 0.6), "half_extent": 0.08, "kind": "disc",
                  "goal": (0.8, -0.9), "goal_radius": 0.15},),
    ),
    "push": TaskScene(
        goal=Goal("line", (1.6, 0.0), 0.15),
        objects=({"position": (1.0, 0.0), "half_extent": 0.15, "kind": "box",
                  "goal": (1.6, 0.0), "goal_radius": 0.15},),
    ),
    "rope_reach": TaskScene(
        goal=Goal("disc", (0.5, -0.8), 0.15),
        rope_tip=(0.9, 0.4),
    ),
}


def scene_for(task: TaskId) -> TaskScene:
    return SCENES[task.resolved().kind]


def goal_for(task: TaskId) -> Goal:
    return scene_for(task).goal


def success(state, task: TaskId) -> bool:
    """Task success predicate. Boundary is exclusive for distance checks."""
    resolved = task.resolved()
    goal = SCENES[resolved.kind].goal
    if resolved.kind == "pick_place":
        if not state.objects:
            return False
        held = [g for g in state.grasps if g is not None and g.kind == "object" and g.index == 0]
        if held:
            return False
        d = float(np.linalg.norm(state.objects[0].position - np.asarray(goal.center)))
        return d < goal.radius
    if resolved.kind == "push":
        if not state.objects:
            return False
        return float(state.objects[0].position[0]) >= goal.line_x
    if resolved.kind == "rope_reach":
        if state.rope is None:
            return False
        d = float(np.linalg.norm(state.rope[ROPE_TIP] - np.asarray(goal.center)))
        return d < goal.radius
    raise AssertionError(f"unhandled task {resolved.kind}")
