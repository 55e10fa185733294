"""Deterministic surrogate tracking controller and episode harness.

The tracker stands in for a learned tracking policy: it contracts the robot
state toward the current guidance target at a configurable rate, with an
optional noise channel on the joints. It is purely kinematic (no dynamics or
contact simulation); measured contacts are copied from the guidance target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .graph import SkillGraph
from .motion_data import CanonicalFrame, Dataset, yaw_rotation
from .scheduler import Damping, Guidance, SchedulerConfig, SchedulerEvent, SkillScheduler
from .serialization import dump_document, parse_document
from .validation import check_in_range, check_nonnegative, check_positive

EPISODE_SCHEMA = "sgepisode/1"


@dataclass(frozen=True)
class RobotState:
    """Simulated robot state; fields mirror a dataset frame."""

    q: np.ndarray
    dq: np.ndarray
    p: np.ndarray            # world-frame body positions (B, 3)
    root_xy: np.ndarray
    root_yaw: float
    root_angvel: np.ndarray
    contacts: np.ndarray

    def canonical(self) -> CanonicalFrame:
        shifted = self.p.copy()
        shifted[:, 0] -= self.root_xy[0]
        shifted[:, 1] -= self.root_xy[1]
        return CanonicalFrame(
            q=self.q, dq=self.dq,
            p_hat=shifted @ yaw_rotation(-self.root_yaw).T,
            root_angvel=self.root_angvel, contacts=self.contacts,
        )

    @classmethod
    def from_canonical(cls, frame: CanonicalFrame) -> "RobotState":
        """Anchor a canonical frame at the world origin with zero heading."""
        return cls(
            q=frame.q.copy(), dq=frame.dq.copy(), p=frame.p_hat.copy(),
            root_xy=np.zeros(2), root_yaw=0.0,
            root_angvel=frame.root_angvel.copy(), contacts=frame.contacts.copy(),
        )


@dataclass
class TrackerConfig:
    alpha: float = 0.6          # convergence rate per tick, (0, 1]
    noise_std: float = 0.0      # additive joint noise, radians
    damping_rate: float = 0.5   # velocity decay factor during e-stop, (0, 1)
    dt: float = 1.0 / 30.0      # seconds per tick
    rng_seed: int = 0

    def validate(self) -> None:
        check_in_range(self.alpha, "alpha", 0.0, 1.0, low_open=True)
        check_nonnegative(self.noise_std, "noise_std")
        check_in_range(self.damping_rate, "damping_rate", 0.0, 1.0,
                       low_open=True, high_open=True)
        check_positive(self.dt, "dt")


@dataclass
class Disturbance:
    """Scripted additive state jump at one tick (a kinematic stand-in for an
    external force)."""

    at_tick: int
    q_delta: np.ndarray | None = None
    dq_delta: np.ndarray | None = None
    root_angvel_delta: np.ndarray | None = None
    root_xy_delta: np.ndarray | None = None
    root_yaw_delta: float = 0.0


def apply_disturbance(state: RobotState, d: Disturbance) -> RobotState:
    return RobotState(
        q=state.q + d.q_delta if d.q_delta is not None else state.q.copy(),
        dq=state.dq + d.dq_delta if d.dq_delta is not None else state.dq.copy(),
        p=state.p.copy(),
        root_xy=state.root_xy + d.root_xy_delta if d.root_xy_delta is not None else state.root_xy.copy(),
        root_yaw=state.root_yaw + d.root_yaw_delta,
        root_angvel=state.root_angvel + d.root_angvel_delta if d.root_angvel_delta is not None else state.root_angvel.copy(),
        contacts=state.contacts.copy(),
    )


def step_tracker(state: RobotState, directive: Guidance | Damping,
                 config: TrackerConfig, rng: np.random.Generator | None = None) -> RobotState:
    """One tick of the surrogate controller.

    Under Guidance the state contracts toward the target: the residual shrinks
    by the factor (1 - rate) exactly, where the rate is alpha on reference
    nodes and max(alpha, 1/kappa) inside buffer segments so the approach lands
    on the target as the countdown reaches one. Under Damping, velocities
    decay by damping_rate and the joints integrate the damped velocity.
    """
    if isinstance(directive, Damping):
        dq = config.damping_rate * state.dq
        omega = config.damping_rate * state.root_angvel
        return RobotState(
            q=state.q + config.dt * dq, dq=dq, p=state.p.copy(),
            root_xy=state.root_xy.copy(), root_yaw=state.root_yaw,
            root_angvel=omega, contacts=state.contacts.copy(),
        )
    target = directive.target
    rate = max(config.alpha, 1.0 / directive.kappa) if directive.kappa > 0 else config.alpha
    keep = 1.0 - rate
    cf = state.canonical()
    q = target.q + keep * (state.q - target.q)
    if config.noise_std > 0 and rng is not None:
        q = q + rng.normal(0.0, config.noise_std, size=q.shape)
    dq = target.dq + keep * (state.dq - target.dq)
    p_hat = target.p_hat + keep * (cf.p_hat - target.p_hat)
    omega = target.root_angvel + keep * (state.root_angvel - target.root_angvel)
    p_world = p_hat @ yaw_rotation(state.root_yaw).T
    p_world[:, 0] += state.root_xy[0]
    p_world[:, 1] += state.root_xy[1]
    return RobotState(
        q=q, dq=dq, p=p_world, root_xy=state.root_xy.copy(),
        root_yaw=state.root_yaw, root_angvel=omega,
        contacts=target.contacts.copy(),
    )


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------

@dataclass
class EpisodeScript:
    """Scripted inputs for one episode."""

    start_skill: str
    start_frame: int = 0
    commands: list[tuple[int, str]] = field(default_factory=list)
    disturbances: list[Disturbance] = field(default_factory=list)
    max_ticks: int = 500

    def to_dict(self) -> dict:
        return {
            "start_skill": self.start_skill, "start_frame": self.start_frame,
            "commands": [[t, s] for t, s in self.commands],
            "n_disturbances": len(self.disturbances),
            "max_ticks": self.max_ticks,
        }


@dataclass
class TickRecord:
    tick: int
    mode: str
    commanded: str
    directive: str                      # "guidance" | "damping"
    node_id: int | None
    node_label: str | None
    skill: str | None
    kappa: int
    state: RobotState                   # state the scheduler observed
    target: CanonicalFrame | None       # guidance target, None while damping
    events: list[SchedulerEvent]


@dataclass
class EpisodeRecord:
    meta: dict
    ticks: list[TickRecord]

    def __len__(self) -> int:
        return len(self.ticks)

    def command_ticks(self) -> list[tuple[int, str]]:
        out = []
        for tr in self.ticks:
            for e in tr.events:
                if e.kind == "command_change":
                    out.append((tr.tick, e.detail["skill"]))
        return out

    def completed_switches(self) -> list[tuple[int, str]]:
        out = []
        for tr in self.ticks:
            for e in tr.events:
                if e.kind == "switch_completed":
                    out.append((tr.tick, e.detail["skill"]))
        return out


def run_episode(graph: SkillGraph, scheduler_config: SchedulerConfig,
                tracker_config: TrackerConfig, script: EpisodeScript,
                dataset: Dataset | None = None) -> EpisodeRecord:
    """Run one closed-loop scheduler + tracker episode.

    Deterministic for fixed configs, script and tracker seed. The recorded
    state at each tick is the one the scheduler reacted to (pre-update), so
    tracking errors measure the jump the directive asked for.
    """
    tracker_config.validate()
    scheduler_config.validate()
    if script.start_skill not in graph.skill_nodes:
        raise ConfigError(f"start skill {script.start_skill!r} not in graph")
    start_nodes = graph.skill_nodes[script.start_skill]
    if not 0 <= script.start_frame < len(start_nodes):
        raise ConfigError(f"start frame {script.start_frame} out of range")
    state = RobotState.from_canonical(graph.frames[start_nodes[script.start_frame]])
    scheduler = SkillScheduler(graph, scheduler_config, initial_command=script.start_skill)
    rng = np.random.default_rng(tracker_config.rng_seed)
    commands = {t: s for t, s in script.commands}
    disturbances: dict[int, list[Disturbance]] = {}
    for d in script.disturbances:
        disturbances.setdefault(d.at_tick, []).append(d)

    ticks: list[TickRecord] = []
    for t in range(script.max_ticks):
        for d in disturbances.get(t, ()):
            state = apply_disturbance(state, d)
        if t in commands:
            scheduler.command(commands[t])
        directive, events = scheduler.step(state, t)
        if isinstance(directive, Guidance):
            ticks.append(TickRecord(
                tick=t, mode=scheduler.mode, commanded=scheduler.commanded_skill,
                directive="guidance", node_id=directive.node_id,
                node_label=graph.node_label(directive.node_id),
                skill=directive.skill, kappa=directive.kappa,
                state=state, target=directive.target, events=events))
        else:
            ticks.append(TickRecord(
                tick=t, mode=scheduler.mode, commanded=scheduler.commanded_skill,
                directive="damping", node_id=None, node_label=None, skill=None,
                kappa=0, state=state, target=None, events=events))
        state = step_tracker(state, directive, tracker_config, rng)

    meta = {
        "graph_digest": graph.content_digest(),
        "dataset_digest": dataset.content_digest() if dataset else graph.dataset_digest,
        "fps": graph.fps,
        "feet_indices": list(graph.feet_indices),
        "scheduler": {"A": scheduler_config.A, "B": scheduler_config.B,
                      "tau": scheduler_config.tau, "k": scheduler_config.k,
                      "lambda_cost": scheduler_config.lambda_cost,
                      "planner": scheduler_config.planner,
                      "omega_thresh": scheduler_config.omega_thresh,
                      "h": scheduler_config.h,
                      "recovery_skill": scheduler_config.recovery_skill},
        "tracker": {"alpha": tracker_config.alpha, "noise_std": tracker_config.noise_std,
                    "damping_rate": tracker_config.damping_rate, "dt": tracker_config.dt,
                    "rng_seed": tracker_config.rng_seed},
        "script": script.to_dict(),
        "replan_computes": scheduler.cache.computes,
        "replan_cache_hits": scheduler.cache.hits,
    }
    return EpisodeRecord(meta=meta, ticks=ticks)


def make_difficulty_script(level: str, skills: list[str], rng_seed: int,
                           warmup: int = 60, spacing: int = 220,
                           jitter: int = 160, cooldown: int = 260) -> EpisodeScript:
    """Scripted evaluation episode with 1 (easy), 2 (medium) or 3 (hard)
    commanded skill switches at spaced, seed-jittered ticks."""
    switches = {"easy": 1, "medium": 2, "hard": 3}.get(level)
    if switches is None:
        raise ConfigError(f"level must be easy|medium|hard, got {level!r}")
    if len(skills) < 2:
        raise ConfigError("need >= 2 skills to switch between")
    rng = np.random.default_rng(rng_seed)
    current = skills[int(rng.integers(len(skills)))]
    script = EpisodeScript(start_skill=current)
    t = warmup + int(rng.integers(jitter))
    for _ in range(switches):
        choices = [s for s in skills if s != current]
        nxt = choices[int(rng.integers(len(choices)))]
        script.commands.append((t, nxt))
        current = nxt
        t += spacing + int(rng.integers(jitter))
    script.max_ticks = script.commands[-1][0] + cooldown
    return script


# ---------------------------------------------------------------------------
# episode serialization ("sgepisode/1")
# ---------------------------------------------------------------------------

def _state_record(s: RobotState) -> dict:
    return {"q": s.q, "dq": s.dq, "p": s.p, "root_xy": s.root_xy,
            "root_yaw": s.root_yaw, "root_angvel": s.root_angvel,
            "contacts": s.contacts}


def _frame_record(f: CanonicalFrame) -> dict:
    return {"q": f.q, "dq": f.dq, "p_hat": f.p_hat,
            "root_angvel": f.root_angvel, "contacts": f.contacts}


def episode_document(record: EpisodeRecord) -> str:
    records = []
    for tr in record.ticks:
        rec = {"tick": tr.tick, "mode": tr.mode, "commanded": tr.commanded,
               "directive": tr.directive, "node_id": tr.node_id,
               "node_label": tr.node_label, "skill": tr.skill, "kappa": tr.kappa,
               "state": _state_record(tr.state),
               "events": [{"tick": e.tick, "kind": e.kind, "detail": e.detail}
                          for e in tr.events]}
        if tr.target is not None:
            rec["target"] = _frame_record(tr.target)
        records.append(rec)
    return dump_document(EPISODE_SCHEMA, record.meta, records)


def load_episode_text(text: str) -> EpisodeRecord:
    header, records = parse_document(text, EPISODE_SCHEMA)
    header.pop("schema", None)
    ticks = []
    for rec in records:
        st = rec["state"]
        state = RobotState(
            q=np.asarray(st["q"], dtype=float), dq=np.asarray(st["dq"], dtype=float),
            p=np.asarray(st["p"], dtype=float),
            root_xy=np.asarray(st["root_xy"], dtype=float),
            root_yaw=float(st["root_yaw"]),
            root_angvel=np.asarray(st["root_angvel"], dtype=float),
            contacts=np.asarray(st["contacts"], dtype=bool))
        target = None
        if "target" in rec:
            tg = rec["target"]
            target = CanonicalFrame(
                q=np.asarray(tg["q"], dtype=float), dq=np.asarray(tg["dq"], dtype=float),
                p_hat=np.asarray(tg["p_hat"], dtype=float),
                root_angvel=np.asarray(tg["root_angvel"], dtype=float),
                contacts=np.asarray(tg["contacts"], dtype=bool))
        ticks.append(TickRecord(
            tick=int(rec["tick"]), mode=rec["mode"], commanded=rec["commanded"],
            directive=rec["directive"], node_id=rec["node_id"],
            node_label=rec["node_label"], skill=rec["skill"], kappa=int(rec["kappa"]),
            state=state, target=target,
            events=[SchedulerEvent(int(e["tick"]), e["kind"], e["detail"])
                    for e in rec["events"]]))
    return EpisodeRecord(meta=header, ticks=ticks)
