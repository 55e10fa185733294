import json

import pytest
from fastapi.testclient import TestClient

from skillgraph import load_episode_text
from skillgraph.service import create_app

from conftest import recovery_scheduler_config, recovery_tracker_config


@pytest.fixture()
def client(recovery_graph):
    app = create_app(recovery_graph, recovery_scheduler_config(),
                     recovery_tracker_config(), max_sessions=4)
    with TestClient(app) as c:
        yield c


def manual_session(client, **overrides):
    payload = {"pace": "manual", "start_skill": "kick", "seed": 0}
    payload.update(overrides)
    r = client.post("/sessions", json=payload)
    assert r.status_code == 200
    return r.json()["id"]


def run_ticks(client, sid, n):
    r = client.post(f"/sessions/{sid}/run", json={"ticks": n})
    assert r.status_code == 200
    return r.json()["snapshots"]


class TestSessions:
    def test_graph_summary(self, client, recovery_graph):
        r = client.get("/graph/summary")
        assert r.status_code == 200
        body = r.json()
        assert body["schema"] == "sgapi/1"
        assert body["skills"] == {"kick": 121, "getup": 61, "wave": 121}
        assert body["digest"] == recovery_graph.content_digest()
        assert len(body["arcs"]) == len(recovery_graph.segments)
        assert all({"from_skill", "from_frame", "to_skill", "to_frame",
                    "buffers"} <= set(a) for a in body["arcs"])

    def test_create_and_run(self, client):
        sid = manual_session(client)
        snaps = run_ticks(client, sid, 5)
        assert [s["tick"] for s in snaps] == [0, 1, 2, 3, 4]
        assert snaps[0]["mode"] == "tracking"
        assert snaps[0]["node"] == "kick:0"

    def test_sessions_are_independent(self, client):
        a = manual_session(client)
        b = manual_session(client)
        run_ticks(client, a, 7)
        snaps = run_ticks(client, b, 2)
        assert [s["tick"] for s in snaps] == [0, 1]

    def test_bad_config_rejected(self, client):
        r = client.post("/sessions", json={"pace": "warp"})
        assert r.status_code == 422
        r = client.post("/sessions", json={"start_skill": "flip"})
        assert r.status_code == 422

    def test_session_limit(self, client):
        for _ in range(4):
            manual_session(client)
        r = client.post("/sessions", json={"pace": "manual"})
        assert r.status_code == 429

    def test_unknown_session(self, client):
        assert client.post("/sessions/zzz/command", json={"skill": "kick"}).status_code == 404
        assert client.get("/sessions/zzz/episode").status_code == 404


class TestCommands:
    def test_command_ack_and_event(self, client):
        sid = manual_session(client)
        run_ticks(client, sid, 3)
        ack = client.post(f"/sessions/{sid}/command", json={"skill": "wave"}).json()
        assert ack["kind"] == "ack"
        snaps = run_ticks(client, sid, 2)
        events = [e["kind"] for s in snaps for e in s["events"]]
        assert "command_change" in events
        assert snaps[0]["tick"] == ack["applies_at_tick"]
        assert snaps[-1]["commanded"] == "wave"

    def test_unknown_skill_rejected(self, client):
        sid = manual_session(client)
        r = client.post(f"/sessions/{sid}/command", json={"skill": "flip"})
        assert r.status_code == 422

    def test_disturb_then_estop_mode(self, client, recovery_graph):
        sid = manual_session(client)
        run_ticks(client, sid, 60)
        g = recovery_graph
        tracked = g.frames[g.skill_nodes["kick"][60]]
        fallen = g.frames[g.skill_nodes["getup"][2]]
        client.post(f"/sessions/{sid}/disturb", json={
            "q_delta": (fallen.q - tracked.q).tolist(),
            "dq_delta": (-tracked.dq).tolist(),
            "root_angvel_delta": [0.5, 0.5, 4.0]})
        snaps = run_ticks(client, sid, 30)
        modes = [s["mode"] for s in snaps]
        assert "estop" in modes
        assert "recovering" in modes
        estop_snaps = [s for s in snaps if s["mode"] == "estop"]
        assert all(s["node"] is None for s in estop_snaps)  # damping, no target

    def test_operator_estop(self, client):
        sid = manual_session(client)
        run_ticks(client, sid, 5)
        ack = client.post(f"/sessions/{sid}/estop")
        assert ack.status_code == 200
        snaps = run_ticks(client, sid, 3)
        events = [e["kind"] for s in snaps for e in s["events"]]
        assert "operator_estop" in events

    def test_episode_download(self, client):
        sid = manual_session(client)
        run_ticks(client, sid, 12)
        r = client.get(f"/sessions/{sid}/episode")
        assert r.status_code == 200
        ep = load_episode_text(r.text)
        assert len(ep.ticks) == 12
        assert ep.meta["session"] == sid


class TestDeterminism:
    def test_replay_reproduces_snapshots(self, client):
        script = {3: "wave", 40: "kick"}

        def drive(sid):
            collected = []
            for t in range(0, 60):
                if t in script:
                    client.post(f"/sessions/{sid}/command", json={"skill": script[t]})
                collected.extend(run_ticks(client, sid, 1))
            return collected

        a = drive(manual_session(client, seed=5))
        b = drive(manual_session(client, seed=5))
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


class TestStreaming:
    def test_ws_stream_consecutive(self, client):
        sid = manual_session(client)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            run_ticks(client, sid, 10)
            ticks = [json.loads(ws.receive_text())["tick"] for _ in range(10)]
        assert ticks == list(range(10))

    def test_two_subscribers_identical(self, client):
        sid = manual_session(client)
        with client.websocket_connect(f"/sessions/{sid}/stream") as w1, \
                client.websocket_connect(f"/sessions/{sid}/stream") as w2:
            run_ticks(client, sid, 6)
            a = [w1.receive_text() for _ in range(6)]
            b = [w2.receive_text() for _ in range(6)]
        assert a == b

    def test_late_subscriber_starts_at_current_tick(self, client):
        sid = manual_session(client)
        run_ticks(client, sid, 5)
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            run_ticks(client, sid, 2)
            first = json.loads(ws.receive_text())
        assert first["tick"] == 5

    def test_realtime_session_produces_snapshots(self, client):
        r = client.post("/sessions", json={"pace": "realtime", "tick_rate": 200.0,
                                           "start_skill": "kick", "max_ticks": 400})
        sid = r.json()["id"]
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            first = json.loads(ws.receive_text())
            second = json.loads(ws.receive_text())
        assert second["tick"] == first["tick"] + 1
        client.delete(f"/sessions/{sid}")
