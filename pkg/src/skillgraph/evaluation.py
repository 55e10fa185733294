"""Scripted evaluation protocol: difficulty levels x trials, metrics report.

Each trial runs one scripted episode with 1/2/3 commanded switches (easy,
medium, hard) against the closed-loop scheduler + surrogate tracker, and the
report aggregates the switching success rate, normalized reward and tracking
errors per level.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .graph import SkillGraph
from .metrics import RewardWeights, episode_switch_failed, nr, relative_error_series, tracking_errors
from .scheduler import SchedulerConfig
from .serialization import dump_document
from .tracker import TrackerConfig, make_difficulty_script, run_episode

METRICS_SCHEMA = "sgmetrics/1"

LEVELS = ("easy", "medium", "hard")

DEVIATION_NOTES = [
    "reward excludes torque/termination penalty and regularization terms (kinematic surrogate has no torques)",
    "reward excludes per-body rotation term (state carries no body orientations)",
    "switch failure also counts commands whose target prefix is never reached",
]


@dataclass
class EvalSettings:
    trials: int = 50
    levels: tuple[str, ...] = LEVELS
    seed: int = 0
    threshold: float = 0.5

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for level in self.levels:
            if level not in LEVELS:
                raise ConfigError(f"unknown level {level!r}")


@dataclass
class EpisodeSummary:
    level: str
    trial: int
    seed: int
    failed: bool
    max_rel_error: float
    nr: float
    errors: dict
    no_plan_events: int
    replan_computes: int
    replan_cache_hits: int


@dataclass
class ProtocolResult:
    settings: EvalSettings
    graph_digest: str
    scheduler: dict
    tracker: dict
    episodes: list[EpisodeSummary] = field(default_factory=list)

    def level_ssr(self, level: str) -> float:
        eps = [e for e in self.episodes if e.level == level]
        return 1.0 - sum(e.failed for e in eps) / len(eps)

    def level_mean(self, level: str, key: str) -> float:
        eps = [e for e in self.episodes if e.level == level]
        if key == "nr":
            return sum(e.nr for e in eps) / len(eps)
        return sum(e.errors[key] for e in eps) / len(eps)

    @property
    def unreachable_commands(self) -> int:
        return sum(e.no_plan_events for e in self.episodes)


def _episode_seed(base: int, level: str, trial: int) -> int:
    return base * 1_000_003 + LEVELS.index(level) * 10_007 + trial


def run_protocol(graph: SkillGraph, scheduler_config: SchedulerConfig,
                 tracker_config: TrackerConfig, settings: EvalSettings,
                 reward_weights: RewardWeights | None = None) -> ProtocolResult:
    """Run trials x levels scripted episodes and summarize them."""
    settings.validate()
    skills = list(graph.skill_nodes)
    horizon = max(len(ids) for ids in graph.skill_nodes.values())
    result = ProtocolResult(
        settings=settings, graph_digest=graph.content_digest(),
        scheduler=vars(scheduler_config).copy(), tracker=vars(tracker_config).copy(),
    )
    for level in settings.levels:
        for trial in range(settings.trials):
            seed = _episode_seed(settings.seed, level, trial)
            script = make_difficulty_script(
                level, skills, seed, warmup=60, spacing=horizon + 60,
                jitter=horizon, cooldown=horizon + 100)
            episode = run_episode(graph, scheduler_config,
                                  replace(tracker_config, rng_seed=seed + 1),
                                  script)
            _, rel_errors = relative_error_series(episode)
            result.episodes.append(EpisodeSummary(
                level=level, trial=trial, seed=seed,
                failed=episode_switch_failed(episode, settings.threshold),
                max_rel_error=float(rel_errors.max()) if len(rel_errors) else 0.0,
                nr=nr(episode, reward_weights),
                errors=tracking_errors(episode).as_dict(),
                no_plan_events=sum(1 for tr in episode.ticks for e in tr.events
                                   if e.kind == "no_plan"),
                replan_computes=episode.meta["replan_computes"],
                replan_cache_hits=episode.meta["replan_cache_hits"],
            ))
    return result


def metrics_document(result: ProtocolResult) -> str:
    """Render a protocol result as an "sgmetrics/1" report."""
    header = {
        "graph_digest": result.graph_digest,
        "trials": result.settings.trials,
        "levels": list(result.settings.levels),
        "seed": result.settings.seed,
        "threshold": result.settings.threshold,
        "scheduler": result.scheduler,
        "tracker": result.tracker,
        "notes": DEVIATION_NOTES,
    }
    records = []
    for e in result.episodes:
        records.append({
            "rec": "episode", "level": e.level, "trial": e.trial, "seed": e.seed,
            "failed": e.failed, "max_rel_error": e.max_rel_error, "nr": e.nr,
            **e.errors,
            "no_plan_events": e.no_plan_events,
            "replan_computes": e.replan_computes,
            "replan_cache_hits": e.replan_cache_hits,
        })
    for level in result.settings.levels:
        rec = {"rec": "aggregate", "level": level, "ssr": result.level_ssr(level),
               "nr": result.level_mean(level, "nr")}
        for key in ("e_g_mpbpe", "e_mpbpe", "e_mpjpe", "e_mpjve", "e_mpbve", "e_mpbae"):
            rec[key] = result.level_mean(level, key)
        records.append(rec)
    return dump_document(METRICS_SCHEMA, header, records)
