"""Websocket teleoperation service: streams wrist-camera observations to a
browser client, applies incremental joint commands to a live env, and records
episodes into the dataset format.

Wire protocol (JSON text frames):
  server -> client:
    {"type": "obs", "t": int, "q": [4], "grip": f,
     "img_up": "<base64 PNG>", "img_down": "<base64 PNG>"}
    {"type": "record_ack", "action": "start"|"stop"|"discard",
     "episode_id": str | null, "count": int}
    {"type": "error", "msg": str}
  client -> server:
    {"type": "cmd", "dq": [4], "grip": f}         # per-tick joint deltas
    {"type": "reset", "state": int, "seed": int}
    {"type": "record", "action": "start"|"stop"|"discard"}

Command semantics are incremental joint velocities (safe under latency);
per-step magnitude is capped by the env rate limit.  One client per session;
the env steps at its native 30 Hz with the latest command held between
stream ticks.
"""

from __future__ import annotations

import asyncio
import base64
import json

import cv2
import numpy as np

from strawpick import dataset as ds
from strawpick.kinematics import Action, ScaraParams
from strawpick.sim.env import EnvConfig, PickEnv, TerminalEnv

_IMG_KEYS = {"wrist_up": "img_up", "wrist_down": "img_down"}


def _encode_png(image_float: np.ndarray) -> str:
    rgb = (image_float * 255.0).round().astype(np.uint8)
    ok, buf = cv2.imencode(".png", cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return base64.b64encode(buf.tobytes()).decode("ascii")


class Session:
    """One env, one client, one tick loop."""

    def __init__(self, state_id: int, fps: int, data_dir: str | None,
                 params: ScaraParams | None = None,
                 env_config: EnvConfig | None = None, seed: int = 0):
        self.env = PickEnv(params=params, config=env_config)
        self.state_id = state_id
        self.fps = fps
        self.data_dir = data_dir
        self.seed = seed
        self.obs = self.env.reset(state_id, seed)
        self.cmd = {"dq": np.zeros(4), "grip": 1.0}
        self.recording = False
        self.buffer: list[tuple] = []
        self.episode_count = 0

    # -------------------------------------------------------------- control

    def apply_tick(self) -> None:
        """Advance the env by one stream tick (one or more 30 Hz steps) with
        the latest command held; holds position once the episode ends."""
        substeps = max(1, round(self.env.config.fps / self.fps))
        dq_step = np.asarray(self.cmd["dq"], dtype=float) / substeps
        for _ in range(substeps):
            if self.env.terminal:
                return
            target = self.env.q.as_array() + dq_step
            action = Action.from_array(
                np.append(target, np.clip(self.cmd["grip"], 0.0, 1.0)))
            if self.recording:
                self._record_step(self.obs, action)
            try:
                self.obs, _ = self.env.step(action)
            except TerminalEnv:
                return

    def _record_step(self, obs, action: Action) -> None:
        self.buffer.append((
            {label: (img * 255.0).round().astype(np.uint8)
             for label, img in obs.images.items()},
            obs.q.as_array(), obs.grip, action.as_array()))

    def handle_message(self, raw: str) -> dict | None:
        """Apply one client message; returns an optional reply payload."""
        try:
            msg = json.loads(raw)
            mtype = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError) as exc:
            return {"type": "error", "msg": f"malformed message: {exc}"}
        try:
            if mtype == "cmd":
                dq = np.asarray(msg["dq"], dtype=float)
                if dq.shape != (4,):
                    raise ValueError("dq must have 4 entries")
                self.cmd = {"dq": dq, "grip": float(msg.get("grip", 1.0))}
                return None
            if mtype == "reset":
                self.state_id = int(msg["state"])
                self.seed = int(msg["seed"])
                self.obs = self.env.reset(self.state_id, self.seed)
                self.cmd = {"dq": np.zeros(4), "grip": 1.0}
                self.recording = False
                self.buffer = []
                return None
            if mtype == "record":
                return self._handle_record(msg["action"])
            raise ValueError(f"unknown message type {mtype!r}")
        except Exception as exc:
            return {"type": "error", "msg": str(exc)}

    def _handle_record(self, action: str) -> dict:
        episode_id = None
        if action == "start":
            self.recording = True
            self.buffer = []
        elif action == "stop":
            self.recording = False
            episode_id = self._store_buffer()
            self.buffer = []
            if episode_id is not None:
                self.episode_count += 1
        elif action == "discard":
            self.recording = False
            self.buffer = []
        else:
            return {"type": "error", "msg": f"unknown record action {action!r}"}
        return {"type": "record_ack", "action": action,
                "episode_id": episode_id, "count": self.episode_count}

    def _store_buffer(self) -> str | None:
        if len(self.buffer) < 2 or self.data_dir is None:
            return None
        images = {label: np.stack([step[0][label] for step in self.buffer])
                  for label in self.buffer[0][0]}
        outcome = self.env._outcome() if self.env.terminal else "timeout"
        record = ds.EpisodeRecord(
            state_id=self.state_id, seed=self.seed, source="teleop",
            outcome=outcome, fps=self.env.config.fps,
            cameras=tuple(images.keys()), images=images,
            q=np.stack([s[1] for s in self.buffer]).astype(np.float32),
            grip=np.array([s[2] for s in self.buffer],
                          dtype=np.float32)[:, None],
            actions=np.stack([s[3] for s in self.buffer]).astype(np.float32))
        return ds.write_episode(record, self.data_dir)

    def obs_message(self) -> str:
        payload = {"type": "obs", "t": self.obs.t,
                   "q": [float(v) for v in self.obs.q.as_array()],
                   "grip": float(self.obs.grip)}
        for label, img in self.obs.images.items():
            payload[_IMG_KEYS.get(label, f"img_{label}")] = _encode_png(img)
        return json.dumps(payload)


async def serve_session(port: int, state_id: int, fps: int,
                        data_dir: str | None = None,
                        params: ScaraParams | None = None,
                        env_config: EnvConfig | None = None,
                        ready: asyncio.Event | None = None) -> None:
    """Run the teleop server until cancelled.

    One client at a time; a disconnect stops recording, discards the buffer,
    and waits for a reconnect.
    """
    import websockets

    session = Session(state_id, fps, data_dir, params=params,
                      env_config=env_config)
    active: set = set()

    async def handler(ws):
        if active:
            await ws.send(json.dumps(
                {"type": "error", "msg": "session busy: one client allowed"}))
            await ws.close()
            return
        active.add(ws)
        period = 1.0 / fps
        loop = asyncio.get_running_loop()

        async def receiver():
            async for raw in ws:
                reply = session.handle_message(raw)
                if reply is not None:
                    await ws.send(json.dumps(reply))

        recv_task = asyncio.create_task(receiver())
        try:
            deadline = loop.time() + period
            while not recv_task.done():
                session.apply_tick()
                await ws.send(session.obs_message())
                await asyncio.sleep(max(0.0, deadline - loop.time()))
                deadline += period
        except Exception:
            pass
        finally:
            recv_task.cancel()
            session.recording = False
            session.buffer = []
            session.cmd = {"dq": np.zeros(4), "grip": session.cmd["grip"]}
            active.discard(ws)

    async with websockets.serve(handler, "127.0.0.1", port, max_size=16 * 2**20):
        if ready is not None:
            ready.set()
        await asyncio.Future()


def run_service(port: int, state_id: int, fps: int,
                data_dir: str | None = None,
                params: ScaraParams | None = None,
                env_config: EnvConfig | None = None) -> None:
    """Blocking entry point; returns cleanly on KeyboardInterrupt."""
    try:
        asyncio.run(serve_session(port, state_id, fps, data_dir,
                                  params=params, env_config=env_config))
    except KeyboardInterrupt:
        pass
