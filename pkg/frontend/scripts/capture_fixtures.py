"""Capture console test fixtures from the real service.

Drives a manual-pace session through a skill command and a disturbance that
triggers the e-stop/recovery flow, and stores the graph summary plus the full
snapshot stream for the frontend test suite.

Run from the repository root:  python3 frontend/scripts/capture_fixtures.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from skillgraph import GraphConfig, SchedulerConfig, SynthesisConfig, TrackerConfig, build_graph, synthesize_dataset
from skillgraph.service import create_app

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def main() -> None:
    dataset = synthesize_dataset(
        SynthesisConfig(n_skills=3, n_frames=81, walk_speed=0.0, yaw_amp=0.0), seed=7)
    graph = build_graph(dataset, GraphConfig(cross_stride=10, d_max=2.0,
                                             delta_buf=0.4, n_max=30, lambda_sw=0.5))
    scheduler = SchedulerConfig(A=2.0, B=40.0, tau=0.25, lambda_cost=50.0, h=10)
    app = create_app(graph, scheduler, TrackerConfig(alpha=0.6))

    with TestClient(app) as client:
        summary = client.get("/graph/summary").json()
        sid = client.post("/sessions", json={"pace": "manual", "start_skill": "skill_0",
                                             "seed": 3}).json()["id"]

        snapshots = []
        acks = []

        def run(n):
            r = client.post(f"/sessions/{sid}/run", json={"ticks": n})
            snapshots.extend(r.json()["snapshots"])

        run(30)
        ack = client.post(f"/sessions/{sid}/command", json={"skill": "skill_1"}).json()
        acks.append({"action": "command", "skill": "skill_1", **ack})
        run(120)
        # large joint-space jump: crosses the hard safety threshold (B=40)
        client.post(f"/sessions/{sid}/disturb", json={
            "q_delta": [4.0] * dataset.n_joints,
            "root_angvel_delta": [0.3, 0.3, 3.0]})
        run(90)

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "graph_summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    (OUT / "snapshot_stream.json").write_text(json.dumps(
        {"session": sid, "acks": acks, "snapshots": snapshots}, indent=1, sort_keys=True))
    modes = sorted({s["mode"] for s in snapshots})
    events = sorted({e["kind"] for s in snapshots for e in s["events"]})
    print(f"captured {len(snapshots)} snapshots; modes={modes}; events={events}")


if __name__ == "__main__":
    main()
