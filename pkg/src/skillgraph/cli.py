"""Command-line entry points.

One binary with subcommands covering the full pipeline: synthesize a dataset,
build a graph, plan a switch, simulate an episode, run the evaluation
protocol, export DOT, or serve the live session API. Exit codes: 0 ok,
1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

from .errors import (ConfigError, EmptySkill, ParseError, SchemaError, SkillGraphError,
                     UnknownSkill)
from .evaluation import EvalSettings, metrics_document, run_protocol
from .graph import GraphConfig, build_graph, export_graph, load_graph, without_cross_edges
from .motion_data import SynthesisConfig, load_dataset, save_dataset, synthesize_dataset
from .planner import plan_document, plan_graph_search, plan_nn, reverse_sssp, target_prefix
from .scheduler import SchedulerConfig
from .serialization import write_text
from .tracker import EpisodeScript, TrackerConfig, episode_document, run_episode

_INPUT_ERRORS = (ParseError, SchemaError, ConfigError, UnknownSkill, EmptySkill,
                 FileNotFoundError, IsADirectoryError)


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat "key = value" config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _coerce(text: str, like) -> object:
    if text.lower() in ("none", ""):
        return None
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(text)
    if isinstance(like, float):
        return float(text)
    return text


def _dataclass_from(cfg: dict[str, str], prefix: str, cls):
    """Build a config dataclass from 'prefix.field' entries."""
    instance = cls()
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if key not in cfg:
            continue
        current = getattr(instance, f.name)
        if isinstance(current, (tuple, list)):
            setattr(instance, f.name, tuple(v.strip() for v in cfg[key].split(",")))
            continue
        if current is None:
            current = _FIELD_HINTS.get((cls, f.name))
        setattr(instance, f.name, _coerce(cfg[key], current if current is not None else ""))
    return instance


# Fields whose default is None need an explicit coercion hint.
_FIELD_HINTS = {
    (GraphConfig, "d_max"): 1.0,
    (GraphConfig, "lambda_sw"): 1.0,
    (SchedulerConfig, "recovery_skill"): "",
}


def _read_graph(args) -> object:
    graph = load_graph(args.graph)
    if getattr(args, "no_cross_edges", False):
        graph = without_cross_edges(graph)
    return graph


def _output(text: str, out: str | None) -> None:
    if out:
        write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_synth(args, cfg: dict[str, str]) -> int:
    synth = _dataclass_from(cfg, "synth", SynthesisConfig)
    if args.skills is not None:
        synth.n_skills = args.skills
    if args.frames is not None:
        synth.n_frames = args.frames
    dataset = synthesize_dataset(synth, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {args.out}: {len(dataset.skills)} skills x "
          f"{len(dataset.skills[0])} frames, J={dataset.n_joints} B={dataset.n_bodies}")
    return 0


def cmd_build_graph(args, cfg: dict[str, str]) -> int:
    dataset = load_dataset(args.dataset)
    config = _dataclass_from(cfg, "graph", GraphConfig)
    graph = build_graph(dataset, config)
    if args.no_cross_edges:
        graph = without_cross_edges(graph)
    text = export_graph(graph, "structured")
    _output(text, args.out)
    buffers = graph.n_nodes - graph.ref_count
    print(f"nodes={graph.n_nodes} refs={graph.ref_count} buffers={buffers} "
          f"edges={len(graph.edges)} segments={len(graph.segments)} "
          f"lambda_sw={graph.lambda_sw:.6g} digest={graph.content_digest()}",
          file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_plan(args, cfg: dict[str, str]) -> int:
    graph = _read_graph(args)
    sched = _dataclass_from(cfg, "scheduler", SchedulerConfig)
    targets = target_prefix(graph, args.skill, args.tau if args.tau else sched.tau)
    skill, _, frame = args.state.partition(":")
    try:
        node = graph.skill_nodes[skill][int(frame)]
    except (KeyError, IndexError, ValueError):
        raise UnknownSkill(f"state {args.state!r} is not a graph frame")
    state = graph.frames[node]
    if (args.planner or sched.planner) == "nn":
        plan = plan_nn(graph, targets, state, sched.B)
    else:
        table = reverse_sssp(graph, targets)
        plan = plan_graph_search(graph, targets, state, table,
                                 sched.A, sched.B, sched.k, sched.lambda_cost)
    _output(plan_document(graph, plan), args.out)
    return 0


def cmd_simulate(args, cfg: dict[str, str]) -> int:
    graph = _read_graph(args)
    sched = _dataclass_from(cfg, "scheduler", SchedulerConfig)
    if args.planner:
        sched.planner = args.planner
    tracker = _dataclass_from(cfg, "tracker", TrackerConfig)
    tracker.rng_seed = args.seed
    start_skill, _, start_frame = args.start.partition(":")
    script = EpisodeScript(start_skill=start_skill,
                           start_frame=int(start_frame) if start_frame else 0,
                           max_ticks=args.ticks)
    for spec in args.command or []:
        tick, _, skill = spec.partition(":")
        script.commands.append((int(tick), skill))
    record = run_episode(graph, sched, tracker, script)
    _output(episode_document(record), args.out)
    return 0


def cmd_eval(args, cfg: dict[str, str]) -> int:
    graph = _read_graph(args)
    sched = _dataclass_from(cfg, "scheduler", SchedulerConfig)
    if args.planner:
        sched.planner = args.planner
    tracker = _dataclass_from(cfg, "tracker", TrackerConfig)
    settings = _dataclass_from(cfg, "eval", EvalSettings)
    if args.trials is not None:
        settings.trials = args.trials
    if args.levels:
        settings.levels = tuple(args.levels.split(","))
    settings.seed = args.seed
    result = run_protocol(graph, sched, tracker, settings)
    report = metrics_document(result)
    if args.out:
        write_text(args.out, report)
    else:
        sys.stdout.write(report)
    for level in settings.levels:
        print(f"{level}: ssr={result.level_ssr(level):.4f} "
              f"nr={result.level_mean(level, 'nr'):.4f} "
              f"e_mpbpe={result.level_mean(level, 'e_mpbpe'):.4f}")
    if result.unreachable_commands and not args.allow_failures:
        print(f"{result.unreachable_commands} commands had no plan", file=sys.stderr)
        return 1
    return 0


def cmd_export_dot(args, cfg: dict[str, str]) -> int:
    graph = _read_graph(args)
    _output(export_graph(graph, "dot"), args.out)
    return 0


def cmd_serve(args, cfg: dict[str, str]) -> int:
    import uvicorn

    from .service import create_app
    graph = _read_graph(args)
    sched = _dataclass_from(cfg, "scheduler", SchedulerConfig)
    tracker = _dataclass_from(cfg, "tracker", TrackerConfig)
    host, _, port = args.serve_addr.rpartition(":")
    app = create_app(graph, sched, tracker)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
    except OSError as exc:
        print(f"cannot bind {args.serve_addr}: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillgraph",
                                     description="skill graph construction, planning and simulation")
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--skills", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-graph", help="build a skill graph from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--no-cross-edges", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("plan", help="plan a switch from a graph state")
    p.add_argument("--graph", required=True)
    p.add_argument("--skill", required=True, help="commanded target skill")
    p.add_argument("--state", required=True, help="query state as skill:frame")
    p.add_argument("--tau", type=float)
    p.add_argument("--planner", choices=["graph", "nn"])
    p.add_argument("--no-cross-edges", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="run one scripted episode")
    p.add_argument("--graph", required=True)
    p.add_argument("--start", required=True, help="start state as skill[:frame]")
    p.add_argument("--command", action="append", help="tick:skill, repeatable")
    p.add_argument("--ticks", type=int, default=500)
    p.add_argument("--planner", choices=["graph", "nn"])
    p.add_argument("--no-cross-edges", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="run the difficulty protocol and write a report")
    p.add_argument("--graph", required=True)
    p.add_argument("--trials", type=int)
    p.add_argument("--levels", help="comma-separated subset of easy,medium,hard")
    p.add_argument("--planner", choices=["graph", "nn"])
    p.add_argument("--no-cross-edges", action="store_true")
    p.add_argument("--allow-failures", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dot", help="write the graph in DOT format")
    p.add_argument("--graph", required=True)
    p.add_argument("--no-cross-edges", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dot)

    p = sub.add_parser("serve", help="serve the live session API")
    p.add_argument("--graph", required=True)
    p.add_argument("--serve-addr", default="127.0.0.1:8321")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg: dict[str, str] = {}
    try:
        if args.config:
            cfg = load_config_file(args.config)
        return args.func(args, cfg)
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SkillGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
