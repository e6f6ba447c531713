"""Orthographic top-down rasterizer and boundary point-cloud sampling.

Both are pure functions of (state, parameters, seed): no global state, no
antialiasing, fixed palette, so identical states yield identical buffers.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..core import EnvSpec, State
from ..rng import STREAM_POINT_CLOUD, make_rng
from .kinematics import arm_chain, joint_slice, link_points
from .tasks import TaskId, WORKSPACE_HALF_EXTENT, goal_for

COLOR_BACKGROUND = (0, 0, 0)
COLOR_LINK = (200, 200, 200)
COLOR_OBJECT = (255, 0, 0)
COLOR_GOAL = (0, 255, 0)
COLOR_ROPE = (0, 0, 255)

LINK_THICKNESS = 0.05
ROPE_THICKNESS = 0.03

_grid_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _pixel_grid(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    if (width, height) not in _grid_cache:
        w = WORKSPACE_HALF_EXTENT
        xs = -w + (np.arange(width) + 0.5) * (2 * w / width)
        ys = w - (np.arange(height) + 0.5) * (2 * w / height)
        _grid_cache[(width, height)] = np.meshgrid(xs, ys)
    return _grid_cache[(width, height)]


def _segment_mask(xx: np.ndarray, yy: np.ndarray, a: np.ndarray, b: np.ndarray,
                  thickness: float) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return (xx - a[0]) ** 2 + (yy - a[1]) ** 2 <= thickness ** 2
    t = ((xx - a[0]) * ab[0] + (yy - a[1]) * ab[1]) / denom
    t = np.clip(t, 0.0, 1.0)
    dx = xx - (a[0] + t * ab[0])
    dy = yy - (a[1] + t * ab[1])
    return dx * dx + dy * dy <= thickness ** 2


def render_image(state: State, spec: EnvSpec, width: int = 64, height: int = 64,
                 task: Optional[TaskId] = None) -> np.ndarray:
    """Rasterize the scene to a u8 RGB image [height, width, 3]."""
    if width < 8 or height < 8:
        raise ValueError("image must be at least 8x8")
    xx, yy = _pixel_grid(width, height)
    img = np.zeros((height, width, 3), dtype=np.uint8)
    img[:] = COLOR_BACKGROUND

    def paint(mask: np.ndarray, color: tuple[int, int, int]) -> None:
        img[mask] = color

    # goal regions first (underneath everything)
    if task is not None:
        goal = goal_for(task)
        if goal.kind == "line":
            paint(np.abs(xx - goal.line_x) <= WORKSPACE_HALF_EXTENT / width, COLOR_GOAL)
        else:
            cx, cy = goal.center
            paint((xx - cx) ** 2 + (yy - cy) ** 2 <= goal.radius ** 2, COLOR_GOAL)
    else:
        for obj in state.objects:
            center, radius = obj.goal_region
            paint((xx - center[0]) ** 2 + (yy - center[1]) ** 2 <= radius ** 2, COLOR_GOAL)

    for obj in state.objects:
        if obj.kind == "disc":
            mask = (xx - obj.position[0]) ** 2 + (yy - obj.position[1]) ** 2 <= obj.half_extent ** 2
        else:
            mask = (np.abs(xx - obj.position[0]) <= obj.half_extent) & \
                   (np.abs(yy - obj.position[1]) <= obj.half_extent)
        paint(mask, COLOR_OBJECT)

    if state.rope is not None:
        for i in range(len(state.rope) - 1):
            paint(_segment_mask(xx, yy, state.rope[i], state.rope[i + 1], ROPE_THICKNESS),
                  COLOR_ROPE)

    for a in range(spec.arm_count):
        pts = link_points(arm_chain(spec, state.base_pose, a),
                          state.joint_angles[joint_slice(spec, a)])
        for i in range(len(pts) - 1):
            paint(_segment_mask(xx, yy, pts[i], pts[i + 1], LINK_THICKNESS), COLOR_LINK)

    return img


def _boundaries(state: State) -> list[tuple[str, object, float]]:
    """(kind, geometry, length) entries for every boundary in the scene."""
    entries: list[tuple[str, object, float]] = []
    for obj in state.objects:
        if obj.kind == "disc":
            entries.append(("disc", obj, 2 * np.pi * obj.half_extent))
        else:
            entries.append(("box", obj, 8 * obj.half_extent))
    if state.rope is not None:
        for i in range(len(state.rope) - 1):
            seg = (state.rope[i].copy(), state.rope[i + 1].copy())
            entries.append(("seg", seg, float(np.linalg.norm(seg[1] - seg[0]))))
    return entries


def _point_on_box(obj, offset: float) -> np.ndarray:
    h = obj.half_extent
    side, along = divmod(offset, 2 * h)
    corners = [(-h, -h), (h, -h), (h, h), (-h, h)]
    directions = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    c = corners[int(side) % 4]
    d = directions[int(side) % 4]
    return obj.position + np.array([c[0] + d[0] * along, c[1] + d[1] * along])


def sample_point_cloud(state: State, m: int, seed: int) -> np.ndarray:
    """Sample m points uniformly along object and rope boundaries, seeded."""
    if m < 1:
        raise ValueError("m must be >= 1")
    entries = _boundaries(state)
    points = np.zeros((m, 2), dtype=np.float64)
    total = sum(e[2] for e in entries)
    if entries and total > 0:
        rng = make_rng(seed, STREAM_POINT_CLOUD)
        offsets = rng.uniform(0.0, total, size=m)
        cuts = np.cumsum([e[2] for e in entries])
        picks = np.searchsorted(cuts, offsets, side="right")
        for row, (pick, off) in enumerate(zip(picks, offsets)):
            pick = min(int(pick), len(entries) - 1)
            kind, geom, length = entries[pick]
            local = off - (cuts[pick] - length)
            if kind == "disc":
                angle = 2 * np.pi * local / length
                points[row] = geom.position + geom.half_extent * np.array(
                    [np.cos(angle), np.sin(angle)])
            elif kind == "box":
                points[row] = _point_on_box(geom, local)
            else:
                a, b = geom
                points[row] = a + (local / length) * (b - a)
    return points.astype(np.float32)
