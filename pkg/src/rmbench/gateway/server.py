"""Websocket teleoperation service.

Serves one operator session at a time: a 20 Hz tick loop owns the
environment, applies the latest client command per tick (hold when none),
and streams scene frames through a small bounded queue so a slow client
drops frames instead of stalling the loop. Record start/stop captures the
ticks in between into an episode file under the teleop dataset.
"""

from __future__ import annotations

import asyncio
import json
import math
import os
from pathlib import Path
from contextlib import asynccontextmanager
from typing import Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..collect import HOLD, EpisodeRecorder, TeleopCommand, command_to_action
from ..core import Environment, make_env
from ..datastore import Dataset
from ..errors import InvariantViolation, RmbError
from ..sim2d.kinematics import ee_poses, joint_slice
from ..sim2d.tasks import goal_for

PROTOCOL_VERSION = 1
TICK_HZ = 20.0
FRAME_QUEUE_CAP = 4

GRIPS = ("open", "close", "hold")


def default_data_dir() -> Path:
    return Path(os.environ.get("RMB_DATA_DIR", "data"))


class TeleopService:
    """Environment, command slot, and recording state behind the socket."""

    def __init__(self, env_id: str, data_dir: Optional[str | Path] = None):
        self.data_dir = Path(data_dir) if data_dir is not None else default_data_dir()
        self.env_id = env_id
        self.env: Environment = make_env(env_id)
        self.env.reset(0)
        self.recorder = EpisodeRecorder(self.env.spec)
        self.recording = False
        self.latest_cmd: Optional[TeleopCommand] = None   # single slot, newest wins
        self.session_open = False
        self.frame_queue: Optional[asyncio.Queue] = None
        self._datasets: dict[str, Dataset] = {}

    # --- env lifecycle ---

    def switch_env(self, env_id: str) -> None:
        self.env = make_env(env_id)
        self.env_id = env_id
        self.env.reset(0)
        self.recorder = EpisodeRecorder(self.env.spec)
        self.recording = False
        self.latest_cmd = None

    def reset(self, seed: int) -> None:
        self.env.reset(seed)
        self.latest_cmd = None
        if self.recording:
            self.recorder.clear()  # restart the capture from the new episode

    def dataset(self) -> Dataset:
        if self.env_id not in self._datasets:
            root = self.data_dir / "teleop" / self.env_id
            if (root / "manifest.json").exists():
                self._datasets[self.env_id] = Dataset(root)
            else:
                self._datasets[self.env_id] = Dataset.create(root, self.env.spec)
        return self._datasets[self.env_id]

    # --- per-tick stepping ---

    def tick(self) -> None:
        if not self.session_open or self.env.done:
            return
        cmd = self.latest_cmd if self.latest_cmd is not None else HOLD
        self.latest_cmd = None
        obs = self.env.observation
        action = command_to_action(cmd, self.env.state, self.env.spec)
        if self.recording:
            self.recorder.append(obs, action)
        self.env.step(action)

    # --- messages ---

    def hello_message(self) -> dict:
        return {"type": "hello", "protocol_version": PROTOCOL_VERSION,
                "env_spec": self.env.spec.to_dict()}

    def scene_message(self) -> dict:
        state = self.env.state
        spec = self.env.spec
        poses = ee_poses(state, spec)
        arms = []
        for a in range(spec.arm_count):
            sl = joint_slice(spec, a)
            arms.append({
                "joints": [float(v) for v in state.joint_angles[sl]],
                "ee": [float(v) for v in poses[a]],
                "gripper": float(state.gripper_open[a]),
            })
        goal = goal_for(self.env.current_task)
        return {
            "type": "scene",
            "t": int(state.t),
            "arms": arms,
            "base": [float(v) for v in state.base_pose],
            "objects": [{"position": [float(v) for v in o.position],
                         "half_extent": float(o.half_extent), "kind": o.kind}
                        for o in state.objects],
            "rope": None if state.rope is None else
                    [[float(x), float(y)] for x, y in state.rope],
            "goal": {"kind": goal.kind, "center": [float(v) for v in goal.center],
                     "radius": float(goal.radius)},
            "recording": self.recording,
            "success": bool(self.env.succeeded),
        }

    def handle(self, msg: dict) -> Optional[dict]:
        """Apply one client message; returns an immediate reply or None."""
        kind = msg.get("type")
        if kind == "cmd":
            try:
                dx, dy = float(msg["dx"]), float(msg["dy"])
                grip = msg.get("grip", "hold")
                arm = int(msg.get("arm", 0))
            except (KeyError, TypeError, ValueError):
                return _error("INVALID_CMD", "cmd requires numeric dx/dy")
            if not (math.isfinite(dx) and math.isfinite(dy)) or grip not in GRIPS:
                return _error("INVALID_CMD", "non-finite delta or bad grip")
            self.latest_cmd = TeleopCommand(np.array([dx, dy]), grip, arm_select=arm)
            return None
        if kind == "reset":
            try:
                seed = int(msg["seed"])
            except (KeyError, TypeError, ValueError):
                return _error("INVALID_RESET", "reset requires an integer seed")
            self.reset(seed)
            return None
        if kind == "record":
            return self._handle_record(msg.get("action"))
        if kind == "select_env":
            env_id = msg.get("env_id")
            try:
                self.switch_env(env_id)
            except (RmbError, KeyError, TypeError):
                return _error("UNKNOWN_ENV", f"cannot serve env {env_id!r}")
            return self.hello_message()
        return _error("UNKNOWN_TYPE", f"unknown message type {kind!r}")

    def _handle_record(self, action: Optional[str]) -> Optional[dict]:
        if action == "start":
            if self.recording:
                return _error("ALREADY_RECORDING", "recording already in progress")
            self.recorder.clear()
            self.recording = True
            return None
        if action == "stop":
            if not self.recording:
                return _error("NOT_RECORDING", "no recording in progress")
            self.recording = False
            try:
                episode = self.recorder.build(self.env.episode_seed, "web",
                                              self.env.succeeded)
            except InvariantViolation:
                return _error("EMPTY_RECORDING", "no steps were recorded")
            path = self.dataset().add_episode(episode)
            self.recorder.clear()
            return {"type": "recorded", "path": str(path),
                    "length": episode.length, "success": episode.success}
        if action == "discard":
            self.recorder.clear()
            self.recording = False
            return None
        return _error("INVALID_RECORD", f"unknown record action {action!r}")


def _error(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


async def _tick_loop(service: TeleopService) -> None:
    loop = asyncio.get_running_loop()
    period = 1.0 / TICK_HZ
    while True:
        started = loop.time()
        service.tick()
        queue = service.frame_queue
        if queue is not None:
            if queue.full():
                try:
                    queue.get_nowait()  # drop the oldest frame, keep fresh ones
                except asyncio.QueueEmpty:
                    pass
            queue.put_nowait(service.scene_message())
        await asyncio.sleep(max(0.0, period - (loop.time() - started)))


async def _drain_frames(ws: WebSocket, queue: asyncio.Queue) -> None:
    while True:
        frame = await queue.get()
        await ws.send_json(frame)


def create_app(env_id: str = "pick_place", data_dir: Optional[str | Path] = None,
               frontend_dir: Optional[str | Path] = None) -> FastAPI:
    service = TeleopService(env_id, data_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        ticker = asyncio.create_task(_tick_loop(service))
        try:
            yield
        finally:
            ticker.cancel()

    app = FastAPI(lifespan=lifespan)
    app.state.service = service

    @app.websocket("/ws")
    async def teleop_socket(ws: WebSocket):
        await ws.accept()
        if service.session_open:
            await ws.send_json(_error("BUSY", "another teleop session is active"))
            await ws.close()
            return
        service.session_open = True
        service.frame_queue = asyncio.Queue(maxsize=FRAME_QUEUE_CAP)
        sender = asyncio.create_task(_drain_frames(ws, service.frame_queue))
        await ws.send_json(service.hello_message())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                    if not isinstance(msg, dict):
                        raise ValueError("message must be an object")
                except ValueError:
                    await ws.send_json(_error("BAD_JSON", "message is not a JSON object"))
                    continue
                reply = service.handle(msg)
                if reply is not None:
                    await ws.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            service.session_open = False
            service.frame_queue = None
            service.latest_cmd = None
            if service.recording:
                service.recorder.clear()
                service.recording = False

    static_root = _locate_frontend(frontend_dir)
    if static_root is not None:
        from starlette.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_root, html=True), name="ui")
    return app


def _locate_frontend(explicit: Optional[str | Path]) -> Optional[Path]:
    candidates = []
    if explicit is not None:
        candidates.append(Path(explicit))
    if "RMB_FRONTEND_DIR" in os.environ:
        candidates.append(Path(os.environ["RMB_FRONTEND_DIR"]))
    candidates.append(Path.cwd() / "frontend" / "dist")
    for c in candidates:
        if c.is_dir():
            return c
    return None


def serve(port: int, env_id: str, host: str = "127.0.0.1",
          data_dir: Optional[str | Path] = None) -> None:
    """Run the teleop service until interrupted."""
    import uvicorn

    from ..errors import BindFailure
    try:
        uvicorn.run(create_app(env_id, data_dir), host=host, port=port,
                    log_level="warning")
    except OSError as e:
        raise BindFailure(f"cannot bind {host}:{port}: {e}") from e
