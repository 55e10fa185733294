"""Live session service: control and telemetry over HTTP + WebSocket.

One session owns one scheduler + tracker loop. External calls never touch the
loop state directly: commands, disturbances and e-stops are queued and applied
at the next tick boundary, and each applied input is stamped with the tick it
took effect. Telemetry is a per-tick snapshot stream fanned out to any number
of subscribers; late subscribers start at the current tick.

Pacing: "realtime" runs a background thread at tick_rate, "fast" free-runs a
thread until max_ticks, "manual" only advances via POST .../run (used by tests
and for deterministic replay).
"""

from __future__ import annotations

import asyncio
import queue
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from starlette.concurrency import run_in_threadpool

from .errors import ResourceLimit, UnknownSession, UnknownSkill
from .graph import SkillGraph
from .scheduler import Guidance, SchedulerConfig, SkillScheduler
from .serialization import dump_record, jsonable
from .tracker import (Disturbance, EpisodeRecord, RobotState, TickRecord, TrackerConfig,
                      apply_disturbance, episode_document, step_tracker)

API_SCHEMA = "sgapi/1"


@dataclass
class SessionConfig:
    pace: str = "realtime"          # realtime | fast | manual
    tick_rate: float = 20.0
    start_skill: str | None = None
    start_frame: int = 0
    seed: int = 0
    max_ticks: int | None = None    # stops the fast/realtime loop when reached


class Session:
    """Single-owner simulation loop plus queued-input mailboxes."""

    def __init__(self, session_id: str, graph: SkillGraph,
                 scheduler_config: SchedulerConfig, tracker_config: TrackerConfig,
                 config: SessionConfig):
        self.id = session_id
        self.graph = graph
        self.config = config
        start_skill = config.start_skill or next(iter(graph.skill_nodes))
        if start_skill not in graph.skill_nodes:
            raise KeyError(start_skill)
        node = graph.skill_nodes[start_skill][config.start_frame]
        self.state = RobotState.from_canonical(graph.frames[node])
        self.scheduler = SkillScheduler(graph, scheduler_config, initial_command=start_skill)
        self.tracker_config = tracker_config
        self.rng = np.random.default_rng(config.seed)
        self.tick = 0
        self.ticks: list[TickRecord] = []
        self._inbox: list[tuple[int, str, dict]] = []
        self._subscribers: list[queue.Queue] = []
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        if config.pace in ("realtime", "fast"):
            self._thread = threading.Thread(target=self._loop, daemon=True)
            self._thread.start()

    # -- input mailboxes ------------------------------------------------------

    def enqueue(self, kind: str, payload: dict) -> int:
        """Queue an input; returns the tick at which it will apply."""
        with self._lock:
            apply_at = self.tick
            self._inbox.append((apply_at, kind, payload))
        return apply_at

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- simulation -----------------------------------------------------------

    def _loop(self) -> None:
        period = 1.0 / self.config.tick_rate
        while not self._stop.is_set():
            if self.config.max_ticks is not None and self.tick >= self.config.max_ticks:
                break
            start = time.monotonic()
            self.advance(1)
            if self.config.pace == "realtime":
                remaining = period - (time.monotonic() - start)
                if remaining > 0:
                    self._stop.wait(remaining)

    def advance(self, n_ticks: int) -> list[dict]:
        """Advance the loop n ticks; returns the produced snapshots."""
        produced = []
        for _ in range(n_ticks):
            produced.append(self._step_once())
        return produced

    def _step_once(self) -> dict:
        with self._lock:
            inbox, self._inbox = self._inbox, []
        for _, kind, payload in inbox:
            if kind == "command":
                self.scheduler.command(payload["skill"])
            elif kind == "disturb":
                self.state = apply_disturbance(self.state, _disturbance_from(payload, self.tick))
            elif kind == "estop":
                self.scheduler.request_estop()
        directive, events = self.scheduler.step(self.state, self.tick)
        if isinstance(directive, Guidance):
            record = TickRecord(
                tick=self.tick, mode=self.scheduler.mode,
                commanded=self.scheduler.commanded_skill, directive="guidance",
                node_id=directive.node_id, node_label=self.graph.node_label(directive.node_id),
                skill=directive.skill, kappa=directive.kappa,
                state=self.state, target=directive.target, events=events)
        else:
            record = TickRecord(
                tick=self.tick, mode=self.scheduler.mode,
                commanded=self.scheduler.commanded_skill, directive="damping",
                node_id=None, node_label=None, skill=None, kappa=0,
                state=self.state, target=None, events=events)
        self.ticks.append(record)
        snapshot = self._snapshot(record)
        with self._lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(snapshot)
        self.state = step_tracker(self.state, directive, self.tracker_config, self.rng)
        self.tick += 1
        return snapshot

    def _snapshot(self, record: TickRecord) -> dict:
        sched = self.scheduler
        return jsonable({
            "schema": API_SCHEMA,
            "kind": "snapshot",
            "tick": record.tick,
            "mode": record.mode,
            "commanded": record.commanded,
            "sim": sched.last_sim,
            "A": sched.config.A,
            "B": sched.config.B,
            "node": record.node_label,
            "skill": record.skill,
            "kappa": record.kappa,
            "plan_digest": sched.plan_digest,
            "remaining": sched.remaining_route,
            "robot": {
                "root_xy": record.state.root_xy,
                "root_yaw": record.state.root_yaw,
                "omega": float(np.linalg.norm(record.state.root_angvel)),
                "q_mean": float(np.mean(record.state.q)),
                "bodies_xy": record.state.p[:, :2],
            },
            "events": [{"tick": e.tick, "kind": e.kind, "detail": e.detail}
                       for e in record.events],
        })

    def episode(self) -> EpisodeRecord:
        meta = {
            "graph_digest": self.graph.content_digest(),
            "dataset_digest": self.graph.dataset_digest,
            "fps": self.graph.fps,
            "feet_indices": list(self.graph.feet_indices),
            "session": self.id,
            "ticks": len(self.ticks),
        }
        return EpisodeRecord(meta=meta, ticks=self.ticks)


def _disturbance_from(payload: dict, tick: int) -> Disturbance:
    def arr(key):
        return np.asarray(payload[key], dtype=float) if key in payload else None
    return Disturbance(
        at_tick=tick, q_delta=arr("q_delta"), dq_delta=arr("dq_delta"),
        root_angvel_delta=arr("root_angvel_delta"), root_xy_delta=arr("root_xy_delta"),
        root_yaw_delta=float(payload.get("root_yaw_delta", 0.0)),
    )


def create_app(graph: SkillGraph, scheduler_config: SchedulerConfig | None = None,
               tracker_config: TrackerConfig | None = None,
               max_sessions: int = 16) -> FastAPI:
    """Build the service around one loaded graph."""
    scheduler_config = scheduler_config or SchedulerConfig()
    tracker_config = tracker_config or TrackerConfig()
    app = FastAPI(title="skillgraph service")
    sessions: dict[str, Session] = {}
    counter = {"next": 0}
    lock = threading.Lock()

    status_for = {UnknownSession: 404, UnknownSkill: 422, ResourceLimit: 429}
    for error_type, status in status_for.items():
        @app.exception_handler(error_type)
        async def _to_http(request, exc, status=status):
            from fastapi.responses import JSONResponse
            return JSONResponse(status_code=status,
                                content={"schema": API_SCHEMA, "kind": "error",
                                         "detail": str(exc)})

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return session

    @app.get("/graph/summary")
    def graph_summary():
        arcs = [{
            "from_skill": graph.nodes[s.source].skill_id,
            "from_frame": graph.nodes[s.source].frame_index,
            "to_skill": graph.nodes[s.target].skill_id,
            "to_frame": graph.nodes[s.target].frame_index,
            "buffers": s.n_buffers,
        } for s in graph.segments]
        return {
            "schema": API_SCHEMA, "kind": "graph_summary",
            "digest": graph.content_digest(),
            "skills": {s: len(ids) for s, ids in graph.skill_nodes.items()},
            "nodes": graph.n_nodes, "refs": graph.ref_count,
            "edges": len(graph.edges), "segments": len(graph.segments),
            "arcs": arcs,
            "lambda_sw": graph.lambda_sw,
            "A": scheduler_config.A, "B": scheduler_config.B,
        }

    @app.post("/sessions")
    def create_session(payload: dict | None = None):
        payload = payload or {}
        with lock:
            if len(sessions) >= max_sessions:
                raise ResourceLimit("session limit reached")
            session_id = f"s{counter['next']}"
            counter["next"] += 1
        config = SessionConfig(
            pace=payload.get("pace", "realtime"),
            tick_rate=float(payload.get("tick_rate", 20.0)),
            start_skill=payload.get("start_skill"),
            start_frame=int(payload.get("start_frame", 0)),
            seed=int(payload.get("seed", 0)),
            max_ticks=payload.get("max_ticks"),
        )
        if config.pace not in ("realtime", "fast", "manual"):
            raise HTTPException(status_code=422, detail=f"bad pace {config.pace!r}")
        if config.tick_rate <= 0:
            raise HTTPException(status_code=422, detail="tick_rate must be > 0")
        try:
            session = Session(session_id, graph, scheduler_config, tracker_config, config)
        except (KeyError, IndexError) as exc:
            raise HTTPException(status_code=422, detail=f"bad start state: {exc}")
        sessions[session_id] = session
        return {"schema": API_SCHEMA, "kind": "session", "id": session_id,
                "pace": config.pace, "tick_rate": config.tick_rate}

    @app.post("/sessions/{session_id}/command")
    def post_command(session_id: str, payload: dict):
        session = get_session(session_id)
        skill = payload.get("skill")
        if skill not in graph.skill_nodes:
            raise UnknownSkill(f"unknown skill {skill!r}")
        applies_at = session.enqueue("command", {"skill": skill})
        return {"schema": API_SCHEMA, "kind": "ack", "applies_at_tick": applies_at}

    @app.post("/sessions/{session_id}/disturb")
    def post_disturb(session_id: str, payload: dict):
        session = get_session(session_id)
        applies_at = session.enqueue("disturb", payload)
        return {"schema": API_SCHEMA, "kind": "ack", "applies_at_tick": applies_at}

    @app.post("/sessions/{session_id}/estop")
    def post_estop(session_id: str):
        session = get_session(session_id)
        applies_at = session.enqueue("estop", {})
        return {"schema": API_SCHEMA, "kind": "ack", "applies_at_tick": applies_at}

    @app.post("/sessions/{session_id}/run")
    def post_run(session_id: str, payload: dict | None = None):
        session = get_session(session_id)
        if session.config.pace != "manual":
            raise HTTPException(status_code=409, detail="run only applies to manual pace")
        n_ticks = int((payload or {}).get("ticks", 1))
        snapshots = session.advance(n_ticks)
        return {"schema": API_SCHEMA, "kind": "ran", "ticks": len(snapshots),
                "snapshots": snapshots}

    @app.get("/sessions/{session_id}/episode")
    def download_episode(session_id: str):
        from fastapi.responses import PlainTextResponse
        session = get_session(session_id)
        return PlainTextResponse(episode_document(session.episode()))

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        session = get_session(session_id)
        session.stop()
        del sessions[session_id]
        return {"schema": API_SCHEMA, "kind": "deleted", "id": session_id}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4004)
            return
        await websocket.accept()
        q = session.subscribe()
        # one task drains the snapshot queue, the other watches for the
        # client hanging up; queue reads poll so a disconnect is noticed
        # within half a second even on an idle session
        recv_task = asyncio.ensure_future(websocket.receive())
        get_task = asyncio.ensure_future(run_in_threadpool(q.get, True, 0.5))
        try:
            while True:
                done, _ = await asyncio.wait({recv_task, get_task},
                                             return_when=asyncio.FIRST_COMPLETED)
                if recv_task in done:
                    message = recv_task.result()
                    if message["type"] == "websocket.disconnect":
                        break
                    recv_task = asyncio.ensure_future(websocket.receive())
                if get_task in done:
                    try:
                        snapshot = get_task.result()
                    except queue.Empty:
                        pass
                    else:
                        await websocket.send_text(dump_record(snapshot))
                    get_task = asyncio.ensure_future(run_in_threadpool(q.get, True, 0.5))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            recv_task.cancel()
            get_task.cancel()
            session.unsubscribe(q)

    app.state.sessions = sessions
    return app
