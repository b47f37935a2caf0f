"""Real-time driving-game server for the browser client.

Two session modes over one JSON-over-WebSocket protocol:

* ``collect`` — 2 Hz dual-control recording. One human drives both cars
  (car 1: W/A/D, car 2: arrow keys); every tick stores both observations
  and both held keys as a raw row, streaming to disk.
* ``play`` — 10 Hz listener game. The human drives car 2 with the arrows;
  a hidden partner (drawn uniformly per episode from {ectl, il, random}
  and revealed only in the session export) drives car 1 and sends one of
  three instruction strings, refreshed every 5th frame.

The simulation core (`SessionSim`) is synchronous and transport-free: the
socket layer only owns the clock and the latest key state. Exports carry
the seed, the per-tick input log, and per-tick state hashes, so any
session replays bit-identically through `replay_session`.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .core import NO_ACTION, SchemaError, one_hot
from .datasets import HUMAN_ROWS_SCHEMA, RawHumanRow, human_row_line
from .envs import DrivingConfig, DrivingGame
from .team import RandomMember, TeamMember

PROTOCOL_VERSION = 1
SUPPORTED_VERSIONS = [1]
EXPORT_SCHEMA = "clap-ui-session-v1"

COLLECT_HZ = 2.0
PLAY_HZ = 10.0
MESSAGE_REFRESH_TICKS = 5

# index = driving action = message symbol in the 3-symbol human alphabet
MESSAGE_STRINGS = ("Turn Clockwise", "Turn Anti-Clockwise", "Accelerate")

# first held key in precedence order wins; no key -> NO_ACTION (coast)
KEY_PRECEDENCE = (
    (("a", 1), ("d", 0), ("w", 2)),            # car 1 (hidden seat in play)
    (("left", 1), ("right", 0), ("up", 2)),    # car 2 (the human in play)
)
HIDDEN_KINDS = ("ectl", "il", "random")


def action_from_keys(held: Sequence[str], seat: int) -> int:
    low = {k.lower() for k in held}
    for key, action in KEY_PRECEDENCE[seat]:
        if key in low:
            return action
    return NO_ACTION


def control_mapping() -> dict:
    return {
        f"car{seat + 1}": {key: MESSAGE_STRINGS[a] for key, a in KEY_PRECEDENCE[seat]}
        for seat in range(2)
    }


def state_hash(state, episode: int) -> str:
    payload = json.dumps(
        {
            "episode": episode,
            "t": state.t,
            "positions": [[float(x), float(y)] for x, y in state.positions],
            "headings": [float(h) for h in state.headings],
            "speeds": [float(v) for v in state.speeds],
            "goals": list(state.goal_slots),
            "reached": list(state.reached),
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def validate_play_bundle(joiner: TeamMember, env_cfg: DrivingConfig) -> None:
    """Refuse bundles whose networks cannot consume this game's observations."""
    if getattr(joiner, "alphabet", None) != len(MESSAGE_STRINGS):
        raise SchemaError(
            f"play-mode bundle must use the {len(MESSAGE_STRINGS)}-symbol "
            f"human alphabet, got {getattr(joiner, 'alphabet', None)}"
        )
    if hasattr(joiner, "comm_net"):
        got = joiner.comm_net.spec.input_dim
    elif hasattr(joiner, "ec_policy"):
        got = joiner.ec_policy.obs_dim
    else:
        raise SchemaError("unrecognized joiner bundle")
    if got != env_cfg.obs_dim:
        raise SchemaError(
            f"bundle expects {got}-dim observations, game emits {env_cfg.obs_dim}"
        )


@dataclass
class EpisodeSummary:
    seed: int
    ticks: int
    hidden: str | None       # play mode only; revealed at export
    solved: bool             # play: human reached; collect: both reached


@dataclass
class SessionSim:
    """Deterministic session simulation advanced one tick per call."""

    mode: str
    base_seed: int
    env_cfg: DrivingConfig = field(default_factory=DrivingConfig)
    hidden_members: dict[str, TeamMember] | None = None

    def __post_init__(self):
        if self.mode not in ("collect", "play"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.game = DrivingGame(self.env_cfg)
        if self.mode == "play":
            members = dict(self.hidden_members or {})
            members.setdefault(
                "random",
                RandomMember(len(MESSAGE_STRINGS), len(MESSAGE_STRINGS),
                             seed=self.base_seed * 7919 + 99),
            )
            missing = [k for k in HIDDEN_KINDS if k not in members]
            if missing:
                raise ValueError(f"play mode needs hidden members {missing}")
            self._members = members
        self._pick_rng = np.random.default_rng([self.base_seed, 777])
        self.tick_count = 0
        self.episode_idx = 0
        self.rows: list[RawHumanRow] = []
        self.episodes: list[EpisodeSummary] = []
        self.state_hashes: list[str] = []
        self.input_log: list[list[str]] = []
        self._symbol: int | None = None
        self._start_episode()

    # ------------------------------------------------------------- episodes

    @property
    def episode_seed(self) -> int:
        return self.base_seed + self.episode_idx

    def _start_episode(self) -> None:
        self.state = self.game.reset(self.episode_seed)
        self.t = 0
        if self.mode == "play":
            self.hidden_kind = HIDDEN_KINDS[
                int(self._pick_rng.integers(0, len(HIDDEN_KINDS)))
            ]
            self._member = self._members[self.hidden_kind]
        else:
            self.hidden_kind = None

    # ----------------------------------------------------------------- tick

    def tick(self, held: Sequence[str]) -> tuple[dict, list[dict]]:
        """Advance one server tick; returns (frame packet, extra events)."""
        held = sorted({k.lower() for k in held})
        self.input_log.append(held)
        obs = self.game.observe_all(self.state)

        if self.mode == "collect":
            a0 = action_from_keys(held, 0)
            a1 = action_from_keys(held, 1)
            self.rows.append(
                RawHumanRow(t=self.t, obs1=obs[0].full, obs2=obs[1].full,
                            act1=a0, act2=a1)
            )
            self.state, _, done = self.game.step(self.state, (a0, a1))
        else:
            if self.t % MESSAGE_REFRESH_TICKS == 0:
                self._symbol = int(
                    self._member.speak(obs[0].full[None, :])[0]
                )
            a_hidden = int(
                self._member.act(
                    obs[0].full[None, :],
                    one_hot(np.zeros(1, dtype=np.int64), len(MESSAGE_STRINGS)),
                )[0]
            )
            a_human = action_from_keys(held, 1)
            self.state, _, env_done = self.game.step(
                self.state, (a_hidden, a_human)
            )
            done = self.state.reached[1] or env_done

        self.t += 1
        self.tick_count += 1
        self.state_hashes.append(state_hash(self.state, self.episode_idx))
        frame = self._frame_packet()
        events: list[dict] = []
        if done:
            self.episodes.append(
                EpisodeSummary(
                    seed=self.episode_seed,
                    ticks=self.t,
                    hidden=self.hidden_kind,
                    solved=(self.state.reached[1] if self.mode == "play"
                            else all(self.state.reached)),
                )
            )
            events.append({"type": "episode_end", "ticks": self.t,
                           "episode": self.episode_idx})
            self.episode_idx += 1
            self._start_episode()
        return frame, events

    def _frame_packet(self) -> dict:
        cfg = self.env_cfg
        packet = {
            "type": "frame",
            "tick": self.tick_count,
            "t": self.t,
            "episode": self.episode_idx,
            "agents": [
                {
                    "pos": [float(x), float(y)],
                    "heading": float(self.state.headings[i]),
                    "speed": float(self.state.speeds[i]),
                    "goal": int(self.state.goal_slots[i]),
                    "reached": bool(self.state.reached[i]),
                }
                for i, (x, y) in enumerate(self.state.positions)
            ],
            "goals": [[float(x), float(y)] for x, y in cfg.goal_slots],
            "pit": {
                "enabled": cfg.pit_enabled,
                "center": [float(cfg.pit_center[0]), float(cfg.pit_center[1])],
                "radius": float(cfg.pit_radius),
            },
        }
        if self.mode == "play":
            packet["message"] = MESSAGE_STRINGS[self._symbol]
        return packet

    # --------------------------------------------------------------- export

    def export(self, partial: bool) -> dict:
        return {
            "schema": EXPORT_SCHEMA,
            "v": PROTOCOL_VERSION,
            "mode": self.mode,
            "seed": self.base_seed,
            "partial": partial,
            "ticks": self.tick_count,
            "episodes": [
                {"seed": e.seed, "ticks": e.ticks, "hidden": e.hidden,
                 "solved": e.solved}
                for e in self.episodes
            ],
            "input_log": self.input_log,
            "state_hashes": self.state_hashes,
        }


def replay_session(
    export: dict,
    env_cfg: DrivingConfig | None = None,
    hidden_members: dict[str, TeamMember] | None = None,
) -> list[str]:
    """Re-run a session from its export; returns the recomputed per-tick
    state hashes (equal to export["state_hashes"] for a faithful replay)."""
    if export.get("schema") != EXPORT_SCHEMA:
        raise SchemaError(f"not a session export: {export.get('schema')!r}")
    sim = SessionSim(
        mode=export["mode"], base_seed=int(export["seed"]),
        env_cfg=env_cfg or DrivingConfig(), hidden_members=hidden_members,
    )
    for held in export["input_log"]:
        sim.tick(held)
    return sim.state_hashes


# ---------------------------------------------------------------- transport


def handshake_error(reason: str) -> dict:
    return {"type": "error", "reason": reason, "supported": SUPPORTED_VERSIONS}


def parse_hello(raw: str, play_available: bool) -> dict:
    try:
        hello = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed hello: {e}") from None
    if not isinstance(hello, dict) or hello.get("type") != "hello":
        raise SchemaError("first frame must be a hello")
    if hello.get("v") != PROTOCOL_VERSION:
        raise SchemaError(f"unsupported protocol version {hello.get('v')!r}")
    mode = hello.get("mode")
    if mode not in ("collect", "play"):
        raise SchemaError(f"unknown mode {mode!r}")
    if mode == "play" and not play_available:
        raise SchemaError("play mode unavailable: joiner bundles not loaded")
    return hello


class SessionRuntime:
    """One live session: the sim, its key state, and its row sink."""

    def __init__(self, sim: SessionSim, rows_path: Path | None):
        self.id = uuid.uuid4().hex[:12]
        self.sim = sim
        self.held: list[str] = []
        self.tick_intervals: list[float] = []
        self.finalized: dict | None = None
        self._rows_path = rows_path
        self._rows_file = None
        self._rows_written = 0
        if rows_path is not None:
            rows_path.parent.mkdir(parents=True, exist_ok=True)
            self._rows_file = rows_path.open("w")
            self._rows_file.write(
                json.dumps({"schema": HUMAN_ROWS_SCHEMA}) + "\n"
            )

    def flush_rows(self) -> None:
        if self._rows_file is None:
            return
        for row in self.sim.rows[self._rows_written:]:
            self._rows_file.write(human_row_line(row) + "\n")
        self._rows_written = len(self.sim.rows)
        self._rows_file.flush()

    def export_snapshot(self, partial: bool) -> dict:
        out = self.sim.export(partial=partial)
        out["id"] = self.id
        out["tick_intervals"] = self.tick_intervals
        if self._rows_path is not None:
            out["rows_path"] = str(self._rows_path)
        return out

    def finalize(self, partial: bool) -> dict:
        if self.finalized is None:
            self.flush_rows()
            if self._rows_file is not None:
                self._rows_file.close()
                self._rows_file = None
            self.finalized = self.export_snapshot(partial=partial)
        return self.finalized


def build_app(
    ectl_bundle: str | Path | None = None,
    il_bundle: str | Path | None = None,
    time_scale: float = 1.0,
    seed: int = 0,
    export_dir: str | Path | None = None,
    env_cfg: DrivingConfig | None = None,
    hidden_members: dict[str, TeamMember] | None = None,
):
    """FastAPI app exposing /ws plus GET /sessions/{id}/export.

    `hidden_members` bypasses bundle loading for embedding and tests;
    normally the two bundles are loaded from disk and validated.
    """
    from .joiners import load_joiner

    env_cfg = env_cfg or DrivingConfig()
    if time_scale <= 0:
        raise ValueError("time_scale must be positive")
    if hidden_members is None:
        hidden_members = {}
        for kind, bundle in (("ectl", ectl_bundle), ("il", il_bundle)):
            if bundle is not None:
                joiner, _ = load_joiner(bundle)
                validate_play_bundle(joiner, env_cfg)
                hidden_members[kind] = joiner
    play_available = {"ectl", "il"} <= set(hidden_members)
    export_dir = Path(export_dir) if export_dir else None

    app = FastAPI(title="claplab driving service")
    app.state.sessions = {}
    app.state.session_count = 0
    app.state.env_cfg = env_cfg
    app.state.time_scale = time_scale

    @app.get("/sessions/{session_id}/export")
    def get_export(session_id: str):
        runtime = app.state.sessions.get(session_id)
        if runtime is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        if runtime.finalized is not None:
            return JSONResponse(runtime.finalized)
        runtime.flush_rows()
        return JSONResponse(runtime.export_snapshot(partial=True))

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            raw = await ws.receive_text()
        except WebSocketDisconnect:
            return
        try:
            hello = parse_hello(raw, play_available)
        except SchemaError as e:
            await ws.send_json(handshake_error(str(e)))
            await ws.close()
            return

        mode = hello["mode"]
        app.state.session_count += 1
        base_seed = seed + 1000 * app.state.session_count
        sim = SessionSim(
            mode=mode, base_seed=base_seed, env_cfg=env_cfg,
            hidden_members=hidden_members if mode == "play" else None,
        )
        rows_path = None
        if mode == "collect" and export_dir is not None:
            rows_path = export_dir / f"session-{base_seed}.rows.jsonl"
        runtime = SessionRuntime(sim, rows_path)
        app.state.sessions[runtime.id] = runtime

        hz = COLLECT_HZ if mode == "collect" else PLAY_HZ
        interval = 1.0 / (hz * time_scale)
        await ws.send_json(
            {
                "type": "session",
                "id": runtime.id,
                "v": PROTOCOL_VERSION,
                "mode": mode,
                "tick_hz": hz,
                "horizon": env_cfg.horizon,
                "controls": control_mapping(),
            }
        )

        loop = asyncio.get_running_loop()
        next_tick = loop.time() + interval
        last_wall = time.monotonic()
        partial = True
        try:
            while True:
                # coalesce client messages until the tick fires
                while (remaining := next_tick - loop.time()) > 0:
                    try:
                        msg = await asyncio.wait_for(
                            ws.receive_text(), timeout=remaining
                        )
                    except asyncio.TimeoutError:
                        break
                    try:
                        data = json.loads(msg)
                    except json.JSONDecodeError:
                        continue
                    if data.get("type") == "keys":
                        held = data.get("held", [])
                        if isinstance(held, list):
                            runtime.held = [str(k) for k in held]
                    elif data.get("type") == "end":
                        partial = False
                        raise _CleanEnd
                next_tick += interval
                frame, events = sim.tick(runtime.held)
                now = time.monotonic()
                runtime.tick_intervals.append(now - last_wall)
                last_wall = now
                runtime.flush_rows()
                await ws.send_json(frame)
                for event in events:
                    await ws.send_json(event)
        except (_CleanEnd, WebSocketDisconnect):
            pass
        finally:
            runtime.finalize(partial=partial)
            if not partial:
                try:
                    await ws.send_json(
                        {"type": "session_end", "id": runtime.id,
                         "export": f"/sessions/{runtime.id}/export"}
                    )
                    await ws.close()
                except RuntimeError:
                    pass

    return app


class _CleanEnd(Exception):
    pass
