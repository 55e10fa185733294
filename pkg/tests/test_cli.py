import json

import pytest

from skillgraph.cli import load_config_file, main
from skillgraph.graph import load_graph


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthesized dataset + built graph reused across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "bench.cfg"
    cfg.write_text(
        "# benchmark calibration\n"
        "synth.walk_speed = 0.0\n"
        "synth.yaw_amp = 0.0\n"
        "synth.n_skills = 3\n"
        "synth.n_frames = 81\n"
        "graph.cross_stride = 10\n"
        "graph.d_max = 2.0\n"
        "graph.delta_buf = 0.4\n"
        "graph.lambda_sw = 0.5\n"
        "scheduler.A = 2.0\n"
        "scheduler.B = 1e9\n"
        "scheduler.lambda_cost = 50.0\n"
        "tracker.alpha = 0.6\n"
    )
    data = root / "data.sgd"
    graph = root / "graph.sgg"
    assert main(["--config", str(cfg), "--seed", "7", "synth", "--out", str(data)]) == 0
    assert main(["--config", str(cfg), "build-graph", "--dataset", str(data),
                 "--out", str(graph)]) == 0
    return {"root": root, "cfg": cfg, "data": data, "graph": graph}


class TestConfigFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("a.b = 1\n# comment\nx.y = hello  # trailing\n")
        assert load_config_file(path) == {"a.b": "1", "x.y": "hello"}

    def test_bad_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("just words\n")
        from skillgraph import ParseError
        with pytest.raises(ParseError):
            load_config_file(path)


class TestBuildGraph:
    def test_happy_path(self, workspace, capsys):
        out = capsys.readouterr()
        graph = load_graph(workspace["graph"])
        assert graph.ref_count == 3 * 81
        assert graph.segments

    def test_missing_file_exits_2(self, capsys):
        rc = main(["build-graph", "--dataset", "/nope/missing.sgd"])
        assert rc == 2
        assert "missing.sgd" in capsys.readouterr().err

    def test_deterministic_outputs(self, workspace, tmp_path):
        again = tmp_path / "graph2.sgg"
        assert main(["--config", str(workspace["cfg"]), "build-graph",
                     "--dataset", str(workspace["data"]), "--out", str(again)]) == 0
        assert again.read_text() == workspace["graph"].read_text()

    def test_no_cross_edges_flag(self, workspace, tmp_path):
        bare = tmp_path / "bare.sgg"
        assert main(["--config", str(workspace["cfg"]), "build-graph",
                     "--dataset", str(workspace["data"]), "--no-cross-edges",
                     "--out", str(bare)]) == 0
        graph = load_graph(bare)
        assert not graph.segments
        assert graph.n_nodes == graph.ref_count


class TestPlan:
    def test_state_in_prefix_costs_zero(self, workspace, tmp_path):
        out = tmp_path / "plan.sgp"
        rc = main(["--config", str(workspace["cfg"]), "plan",
                   "--graph", str(workspace["graph"]), "--skill", "skill_0",
                   "--state", "skill_0:3", "--out", str(out)])
        assert rc == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert header["schema"] == "sgplan/1"
        assert header["total_cost"] == 0.0
        assert header["length"] == 1
        assert header["entry"] == "skill_0:3"

    def test_cross_skill_plan(self, workspace, tmp_path):
        out = tmp_path / "plan.sgp"
        rc = main(["--config", str(workspace["cfg"]), "plan",
                   "--graph", str(workspace["graph"]), "--skill", "skill_1",
                   "--state", "skill_0:40", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        hops = [json.loads(l) for l in lines[1:]]
        assert any(h["kind"] != "intra" for h in hops)

    def test_bad_state_exits_2(self, workspace):
        rc = main(["plan", "--graph", str(workspace["graph"]),
                   "--skill", "skill_0", "--state", "skill_9:0"])
        assert rc == 2


class TestSimulateAndDot:
    def test_simulate_writes_episode(self, workspace, tmp_path):
        out = tmp_path / "ep.sge"
        rc = main(["--config", str(workspace["cfg"]), "--seed", "3", "simulate",
                   "--graph", str(workspace["graph"]), "--start", "skill_0",
                   "--command", "40:skill_1", "--ticks", "200", "--out", str(out)])
        assert rc == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert header["schema"] == "sgepisode/1"
        from skillgraph import load_episode_text
        ep = load_episode_text(out.read_text())
        assert len(ep.ticks) == 200
        assert ep.command_ticks() == [(40, "skill_1")]

    def test_export_dot(self, workspace, tmp_path):
        out = tmp_path / "g.dot"
        rc = main(["export-dot", "--graph", str(workspace["graph"]), "--out", str(out)])
        assert rc == 0
        text = out.read_text()
        assert text.startswith("digraph") and text.rstrip().endswith("}")


class TestEval:
    def test_small_report(self, workspace, tmp_path, capsys):
        out = tmp_path / "report.sgm"
        rc = main(["--config", str(workspace["cfg"]), "--seed", "1", "eval",
                   "--graph", str(workspace["graph"]), "--trials", "2",
                   "--levels", "easy", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        header = json.loads(lines[0])
        assert header["schema"] == "sgmetrics/1"
        records = [json.loads(l) for l in lines[1:]]
        assert sum(r["rec"] == "episode" for r in records) == 2
        aggregate = [r for r in records if r["rec"] == "aggregate"]
        assert aggregate and aggregate[0]["level"] == "easy"
        assert "ssr=" in capsys.readouterr().out

    def test_determinism(self, workspace, tmp_path):
        a, b = tmp_path / "a.sgm", tmp_path / "b.sgm"
        args = ["--config", str(workspace["cfg"]), "--seed", "5", "eval",
                "--graph", str(workspace["graph"]), "--trials", "2", "--levels", "easy"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_text() == b.read_text()

    def test_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["eval"])  # missing --graph
        assert exc.value.code == 2
