"""Online skill scheduling: triggers, entry checks, guidance synthesis, e-stop.

The scheduler owns a route (an installed plan plus its natural continuation
along the entered skill), advances one node per tick, and reacts to four
trigger families: initialization, command changes, approaching the end of the
current reference, and similarity crossings of the soft (A) or hard (B)
safety thresholds. Crossing B switches the output from Guidance to a Damping
directive until the root is stationary, after which a recovery plan is
installed and tracked back to the commanded target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EStopRequired, NoTransitions, UnknownSkill, Unreachable
from .graph import SkillGraph
from .motion_data import CanonicalFrame
from .planner import (Plan, PlannerCache, TargetSet, TwoStagePlan, best_recovery_entry,
                      plan_graph_search, plan_nn, reconstruct_path, target_prefix)
from .serialization import digest, dump_document

EVENTS_SCHEMA = "sgevents/1"

TRACKING = "tracking"
SWITCHING = "switching"
ESTOP = "estop"
RECOVERING = "recovering"

GRAPH_SEARCH = "graph"
NEAREST_NEIGHBOR = "nn"


@dataclass(frozen=True)
class Guidance:
    """Per-tick tracking target.

    ``kappa`` counts the remaining steps to the end of a buffer segment and is
    zero on reference nodes; inside a segment the target is pinned to the
    segment's successor frame.
    """

    target: CanonicalFrame
    kappa: int
    node_id: int
    ref_node: int
    skill: str


@dataclass(frozen=True)
class Damping:
    """Directive replacing guidance during an emergency stop."""


@dataclass(frozen=True)
class SchedulerEvent:
    tick: int
    kind: str
    detail: dict = field(default_factory=dict)


@dataclass
class SchedulerConfig:
    """Thresholds and planner selection for the online scheduler."""

    A: float = 1.0                 # attach directly at or below
    B: float = 50.0                # defer and e-stop at or above
    tau: float = 0.25              # commanded-prefix fraction
    k: int = 5                     # composite candidates kept
    lambda_cost: float = 1.0       # weight on the entry jump cost
    planner: str = GRAPH_SEARCH
    omega_thresh: float = 0.1      # rad/s stationarity bound for e-stop exit
    h: int = 10                    # near-end horizon, steps
    recovery_skill: str | None = None

    def validate(self) -> None:
        if not 0 < self.A < self.B:
            raise ConfigError(f"need 0 < A < B, got A={self.A}, B={self.B}")
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if self.h < 1:
            raise ConfigError("h must be >= 1")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.planner not in (GRAPH_SEARCH, NEAREST_NEIGHBOR):
            raise ConfigError(f"planner must be '{GRAPH_SEARCH}' or '{NEAREST_NEIGHBOR}'")
        if self.omega_thresh <= 0:
            raise ConfigError("omega_thresh must be > 0")


class SkillScheduler:
    """Single-owner state machine driving one tracked robot.

    One step() caller at a time; command() may be called from other threads,
    it only appends to a queue drained at the next tick boundary.
    """

    def __init__(self, graph: SkillGraph, config: SchedulerConfig,
                 initial_command: str | None = None):
        config.validate()
        self.graph = graph
        self.config = config
        self.cache = PlannerCache(graph)
        first_skill = next(iter(graph.skill_nodes))
        self._commanded = initial_command or first_skill
        if self._commanded not in graph.skill_nodes:
            raise UnknownSkill(f"skill {self._commanded!r} not in graph")
        self._targets: TargetSet | None = None
        self._mode: str | None = None
        self._route: list[int] = []
        self._pos = 0
        self._fresh = False
        self._near_end_fired = False
        self._switch_pending = False
        self._nn_final: TargetSet | None = None
        self._pending: list[str] = []
        self._estop_requested = False
        self._prev_sim: float | None = None
        self._last_sim: float | None = None
        self._plan_digest: str | None = None
        self._initialized = False
        self.event_log: list[SchedulerEvent] = []

    # -- public surface ------------------------------------------------------

    @property
    def mode(self) -> str | None:
        return self._mode

    @property
    def commanded_skill(self) -> str:
        return self._commanded

    @property
    def last_sim(self) -> float | None:
        return self._last_sim

    @property
    def current_node(self) -> int | None:
        return self._route[self._pos] if self._route else None

    @property
    def remaining_route(self) -> int:
        return max(0, len(self._route) - 1 - self._pos) if self._route else 0

    @property
    def plan_digest(self) -> str | None:
        return self._plan_digest

    def command(self, skill: str) -> SchedulerEvent:
        """Queue a target-skill change; applied at the next tick boundary."""
        if skill not in self.graph.skill_nodes:
            raise UnknownSkill(f"skill {skill!r} not in graph")
        self._pending.append(skill)
        return SchedulerEvent(-1, "command_queued", {"skill": skill})

    def request_estop(self) -> None:
        """Operator-initiated stop; takes effect at the next step."""
        self._estop_requested = True

    def step(self, state, tick: int, command: str | None = None
             ) -> tuple[Guidance | Damping, list[SchedulerEvent]]:
        """Advance one tick: react to triggers, emit Guidance or Damping."""
        events: list[SchedulerEvent] = []
        cf = state.canonical()
        if command is not None:
            if command not in self.graph.skill_nodes:
                raise UnknownSkill(f"skill {command!r} not in graph")
            self._pending.append(command)

        new_cmd = None
        while self._pending:
            c = self._pending.pop(0)
            if c != self._commanded:
                new_cmd = c

        if not self._initialized:
            self._initialize(cf, tick, events)

        if new_cmd is not None:
            self._commanded = new_cmd
            self._targets = target_prefix(self.graph, new_cmd, self.config.tau)
            self._switch_pending = True
            events.append(SchedulerEvent(tick, "command_change", {"skill": new_cmd}))
            if self._mode != ESTOP:
                self._replan(cf, tick, "command_change", events)

        if self._estop_requested:
            self._estop_requested = False
            if self._mode != ESTOP:
                events.append(SchedulerEvent(tick, "operator_estop", {}))
                self._enter_estop(tick, events)

        if self._mode == ESTOP:
            directive = self._estop_tick(cf, state, tick, events)
            if isinstance(directive, Damping):
                self._record(events)
                return directive, events
            # recovery plan installed this tick; fall through to emit it
        elif not self._fresh:
            self._advance()

        guidance = self._guidance_at(self._route[self._pos])
        sim = self._sim_to(cf, guidance.target)
        # A freshly installed entry was either gated below B already or is the
        # deliberately ungated post-stop recovery entry, so B-monitoring only
        # applies to targets the route walked onto.
        self._monitor(sim, tick, events, allow_estop=not self._fresh)
        if self._mode == ESTOP:
            self._fresh = False
            self._record(events)
            return Damping(), events

        self._arrival_and_near_end(cf, tick, events)
        guidance = self._guidance_at(self._route[self._pos])
        self._fresh = False
        self._record(events)
        return guidance, events

    # -- internals -------------------------------------------------------------

    def _record(self, events: list[SchedulerEvent]) -> None:
        self.event_log.extend(events)

    def _sim_to(self, cf: CanonicalFrame, target: CanonicalFrame) -> float:
        w_q, w_dq, _ = self.graph.config.term_weights
        return float(w_q * np.abs(cf.q - target.q).sum()
                     + w_dq * np.abs(cf.dq - target.dq).sum())

    def _guidance_at(self, node_id: int) -> Guidance:
        frame, kappa, ref = self.graph.guidance_frame(node_id)
        return Guidance(frame, kappa, node_id, ref, self.graph.node_skill(node_id))

    def _initialize(self, cf: CanonicalFrame, tick: int, events: list[SchedulerEvent]) -> None:
        self._initialized = True
        self._targets = target_prefix(self.graph, self._commanded, self.config.tau)
        self._switch_pending = True
        events.append(SchedulerEvent(tick, "init", {"skill": self._commanded}))
        self._replan(cf, tick, "init", events)
        if not self._route:
            # could not attach anywhere safe at startup
            self._set_mode(ESTOP, tick, events)

    def _set_mode(self, mode: str, tick: int, events: list[SchedulerEvent]) -> None:
        if mode != self._mode:
            events.append(SchedulerEvent(tick, "mode_change",
                                         {"from": self._mode, "to": mode}))
            self._mode = mode

    def _install(self, plan: Plan, mode: str, trigger: str, tick: int,
                 events: list[SchedulerEvent]) -> None:
        route = list(plan.path)
        nxt = self.graph.next_intra(route[-1])
        while nxt is not None:
            route.append(nxt)
            nxt = self.graph.next_intra(nxt)
        self._route = route
        self._pos = 0
        self._fresh = True
        self._near_end_fired = False
        self._plan_digest = digest([plan.entry, list(plan.path), plan.cost])
        events.append(SchedulerEvent(tick, "plan_installed", {
            "trigger": trigger, "planner": plan.planner_kind,
            "entry": self.graph.node_label(plan.entry), "length": len(plan.path),
            "cost": plan.cost, "digest": self._plan_digest,
        }))
        self._set_mode(mode, tick, events)
        self._check_arrival(tick, events)

    def _check_arrival(self, tick: int, events: list[SchedulerEvent]) -> None:
        node = self._route[self._pos]
        if self._switch_pending and node in self._targets.id_set:
            self._switch_pending = False
            events.append(SchedulerEvent(tick, "switch_completed",
                                         {"skill": self._commanded}))
        if not self._switch_pending and self._mode in (SWITCHING, RECOVERING):
            if node in self._targets.id_set:
                self._set_mode(TRACKING, tick, events)

    def _replan(self, cf: CanonicalFrame, tick: int, trigger: str,
                events: list[SchedulerEvent]) -> None:
        mode = SWITCHING if trigger == "command_change" else (self._mode or TRACKING)
        cfg = self.config
        try:
            if cfg.planner == GRAPH_SEARCH:
                table = self.cache.table_for(self._targets)
                plan = plan_graph_search(self.graph, self._targets, cf, table,
                                         cfg.A, cfg.B, cfg.k, cfg.lambda_cost)
            else:
                recovery = None
                if cfg.recovery_skill is not None:
                    recovery = target_prefix(self.graph, cfg.recovery_skill, cfg.tau)
                result = plan_nn(self.graph, self._targets, cf, cfg.B, recovery)
                if isinstance(result, TwoStagePlan):
                    self._nn_final = result.final_target
                    self._install(result.first, RECOVERING, trigger, tick, events)
                    return
                plan = result
        except EStopRequired as exc:
            events.append(SchedulerEvent(tick, "safety_cross",
                                         {"which": "B", "direction": "up",
                                          "sim": exc.best_sim, "at": trigger}))
            self._enter_estop(tick, events)
            return
        except Unreachable as exc:
            events.append(SchedulerEvent(tick, "no_plan", {"reason": str(exc),
                                                           "at": trigger}))
            return
        self._nn_final = None
        self._install(plan, mode, trigger, tick, events)

    def _enter_estop(self, tick: int, events: list[SchedulerEvent]) -> None:
        events.append(SchedulerEvent(tick, "estop_enter", {}))
        self._set_mode(ESTOP, tick, events)
        self._prev_sim = None

    def _estop_tick(self, cf: CanonicalFrame, state, tick: int,
                    events: list[SchedulerEvent]) -> Guidance | Damping:
        omega = float(np.linalg.norm(state.root_angvel))
        if omega >= self.config.omega_thresh:
            return Damping()
        events.append(SchedulerEvent(tick, "stationary", {"omega": omega}))
        cfg = self.config
        try:
            if cfg.planner == GRAPH_SEARCH:
                table = self.cache.table_for(self._targets)
                entry = best_recovery_entry(self.graph, cf, table, cfg.lambda_cost)
                plan = reconstruct_path(self.graph, table, entry)
            else:
                recovery = None
                if cfg.recovery_skill is not None:
                    recovery = target_prefix(self.graph, cfg.recovery_skill, cfg.tau)
                result = plan_nn(self.graph, self._targets, cf, cfg.B, recovery)
                if isinstance(result, TwoStagePlan):
                    self._nn_final = result.final_target
                    result = result.first
                plan = result
        except (Unreachable, EStopRequired) as exc:
            events.append(SchedulerEvent(tick, "no_plan",
                                         {"reason": str(exc), "at": "recovery"}))
            return Damping()
        self._switch_pending = True
        self._install(plan, RECOVERING, "recovery", tick, events)
        return self._guidance_at(self._route[self._pos])

    def _advance(self) -> None:
        if self._pos < len(self._route) - 1:
            self._pos += 1

    def _monitor(self, sim: float, tick: int, events: list[SchedulerEvent],
                 allow_estop: bool = True) -> None:
        self._last_sim = sim
        prev = self._prev_sim
        self._prev_sim = sim
        cfg = self.config
        if prev is not None:
            if prev < cfg.A <= sim:
                events.append(SchedulerEvent(tick, "safety_cross",
                                             {"which": "A", "direction": "up", "sim": sim}))
            elif sim < cfg.A <= prev:
                events.append(SchedulerEvent(tick, "safety_cross",
                                             {"which": "A", "direction": "down", "sim": sim}))
        if sim >= cfg.B and allow_estop:
            events.append(SchedulerEvent(tick, "safety_cross",
                                         {"which": "B", "direction": "up", "sim": sim}))
            self._enter_estop(tick, events)

    def _arrival_and_near_end(self, cf: CanonicalFrame, tick: int,
                              events: list[SchedulerEvent]) -> None:
        self._check_arrival(tick, events)
        if self.remaining_route > self.config.h:
            return
        if self._nn_final is not None:
            try:
                result = plan_nn(self.graph, self._targets, cf, self.config.B, None)
            except EStopRequired:
                return  # still unsafe; keep walking the recovery chain and retry
            if isinstance(result, Plan):
                self._nn_final = None
                self._install(result, RECOVERING, "near_end", tick, events)
            return
        if not self._near_end_fired:
            self._near_end_fired = True
            events.append(SchedulerEvent(tick, "near_end",
                                         {"remaining": self.remaining_route}))
            self._replan(cf, tick, "near_end", events)


def sample_initial_state(graph: SkillGraph, n: int, rng: np.random.Generator) -> int:
    """Reference node n intra-steps upstream of a uniformly sampled cross head.

    Clamps to the start of the sequence when the head is closer than n frames.
    """
    if not graph.segments:
        raise NoTransitions("graph has no cross segments")
    seg = graph.segments[int(rng.integers(len(graph.segments)))]
    node = graph.nodes[seg.source]
    frame = max(0, node.frame_index - n)
    return graph.skill_nodes[node.skill_id][frame]


def events_document(events: list[SchedulerEvent], meta: dict | None = None) -> str:
    """Render an event list as an "sgevents/1" document."""
    header = dict(meta or {})
    records = [{"tick": e.tick, "kind": e.kind, **e.detail} for e in events]
    return dump_document(EVENTS_SCHEMA, header, records)
