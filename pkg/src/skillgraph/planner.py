"""Planning over skill graphs: value tables, path reconstruction, entry selection.

Planning toward a commanded skill is a shortest-path-to-set problem under the
deployment weights. A reverse multi-source Dijkstra from the target set yields
a per-node cost-to-go and a next-hop map; replanning is then a lookup plus
pointer chasing, so tables are cached per target set.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EStopRequired, UnknownSkill, Unreachable
from .graph import SkillGraph
from .motion_data import CanonicalFrame
from .serialization import digest, dump_document

PLAN_SCHEMA = "sgplan/1"


@dataclass(frozen=True)
class TargetSet:
    """An ordered set of reference nodes planning should reach."""

    ids: tuple[int, ...]
    skill_id: str | None = None

    def __post_init__(self):
        if not self.ids:
            raise ConfigError("target set is empty")

    @property
    def id_set(self) -> frozenset[int]:
        return frozenset(self.ids)

    @property
    def digest(self) -> str:
        return digest([self.skill_id, sorted(self.ids)])


def target_prefix(graph: SkillGraph, skill_id: str, tau: float) -> TargetSet:
    """First ceil(tau * T) reference nodes of a skill."""
    if not 0 < tau <= 1:
        raise ConfigError(f"tau must lie in (0, 1], got {tau}")
    ids = graph.skill_nodes.get(skill_id)
    if ids is None:
        raise UnknownSkill(f"skill {skill_id!r} not in graph (has {sorted(graph.skill_nodes)})")
    count = math.ceil(tau * len(ids))
    return TargetSet(tuple(ids[:count]), skill_id)


@dataclass
class ValueTable:
    """Cost-to-go and optimal successor toward one target set.

    v_star[u] is the minimum total deployment weight from u into the set
    (inf when unreachable, 0 on the set itself); next_hop[u] is the successor
    achieving it (-1 on target nodes and unreachable nodes) and hop_weight[u]
    the weight of the edge to it, so v_star[u] = hop_weight[u] +
    v_star[next_hop[u]] holds bit-exactly.
    """

    v_star: np.ndarray
    next_hop: np.ndarray
    hop_weight: np.ndarray
    target_digest: str

    def reachable(self, node_id: int) -> bool:
        return math.isfinite(self.v_star[node_id])


def reverse_sssp(graph, targets: TargetSet) -> ValueTable:
    """Multi-source Dijkstra from the target set over reversed edges.

    All deployment weights are nonnegative by construction, so the search is
    exact. Equal-cost successors resolve to the smallest node id.
    """
    n = graph.n_nodes
    radj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for u in range(n):
        for e in graph.out_edges(u):
            radj[e.dst].append((e.src, e.w_deploy))

    dist = np.full(n, np.inf)
    hop = np.full(n, -1, dtype=np.int64)
    hop_w = np.zeros(n)
    heap: list[tuple[float, int]] = []
    for t in sorted(targets.id_set):
        dist[t] = 0.0
        heapq.heappush(heap, (0.0, t))
    while heap:
        du, u = heapq.heappop(heap)
        if du > dist[u]:
            continue
        for v, w in radj[u]:
            cand = w + dist[u]
            if cand < dist[v]:
                dist[v] = cand
                hop[v] = u
                hop_w[v] = w
                heapq.heappush(heap, (cand, v))
            elif cand == dist[v] and hop[v] != -1 and u < hop[v]:
                hop[v] = u
                hop_w[v] = w
    for t in targets.id_set:
        hop[t] = -1
        hop_w[t] = 0.0
    return ValueTable(dist, hop, hop_w, targets.digest)


@dataclass(frozen=True)
class Plan:
    """A concrete route from an entry node into a target set."""

    entry: int
    path: tuple[int, ...]
    cost: float
    planner_kind: str            # "graph" | "nn"
    target_digest: str

    def __len__(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class TwoStagePlan:
    """Reach a recovery target first, then replan toward the commanded one."""

    first: Plan
    final_target: TargetSet


def reconstruct_path(graph, table: ValueTable, entry: int,
                     planner_kind: str = "graph") -> Plan:
    """Follow next_hop pointers from an entry until a target node.

    The cost folds the traversed edge weights tail-first, matching the
    accumulation order of the Dijkstra relaxation, so it reproduces
    v_star[entry] exactly.
    """
    if not table.reachable(entry):
        raise Unreachable(f"node {entry} cannot reach the target set")
    hops = table.next_hop
    path = [entry]
    u = entry
    while hops[u] != -1:
        u = int(hops[u])
        path.append(u)
    cost = 0.0
    for node in reversed(path[:-1]):
        cost = table.hop_weight[node] + cost
    return Plan(entry, tuple(path), float(cost), planner_kind, table.target_digest)


@dataclass(frozen=True)
class Candidate:
    node: int
    sim: float
    score: float
    cost_to_go: float


@dataclass(frozen=True)
class EntryDecision:
    """Outcome of the attach-or-score-or-stop gate.

    kind is "direct" (attach at ``entry``), "composite" (ranked ``candidates``)
    or "estop" (everything beyond the hard threshold).
    """

    kind: str
    best_sim: float
    entry: int | None = None
    candidates: tuple[Candidate, ...] = ()


def entry_check(graph: SkillGraph, state: CanonicalFrame, targets: TargetSet,
                A: float, B: float, k: int = 5, lambda_cost: float = 1.0,
                table: ValueTable | None = None) -> EntryDecision:
    """Gate a state against a target prefix by pose-velocity similarity.

    Below A the state attaches directly at its best match. At or above B the
    switch is deferred to an emergency stop. In between, candidates are ranked
    by lambda_cost * (distance + switch penalty) plus the cached cost-to-go
    when a value table is supplied; candidates at or above B are rejected.
    """
    if not A < B:
        raise ConfigError(f"need A < B, got A={A}, B={B}")
    if table is not None:
        all_sims, all_dists = graph.query_from(state)
        rows = np.array(targets.ids)
        sims = all_sims[rows]
    else:
        rows = np.array(targets.ids)
        sims = graph.sims_from(state, rows)
    best_i = int(np.argmin(sims))
    best_sim = float(sims[best_i])
    if best_sim <= A:
        return EntryDecision("direct", best_sim, entry=int(rows[best_i]))
    if best_sim >= B:
        return EntryDecision("estop", best_sim)

    if table is not None:
        finite = np.isfinite(table.v_star[:graph.ref_count])
        pool = np.flatnonzero(finite & (all_sims < B))
        pool_sims = all_sims[pool]
        dists = all_dists[pool]
        cost_to_go = table.v_star[pool]
    else:
        keep = sims < B
        pool = rows[keep]
        pool_sims = sims[keep]
        dists = graph.distances_from(state, pool)
        cost_to_go = np.zeros(len(pool))
    scores = lambda_cost * (dists + graph.lambda_sw) + cost_to_go
    best = _smallest_by_score(pool, scores, k)
    candidates = tuple(
        Candidate(int(pool[i]), float(pool_sims[i]), float(scores[i]), float(cost_to_go[i]))
        for i in best)
    return EntryDecision("composite", best_sim, candidates=candidates)


def _smallest_by_score(pool: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k lowest scores; ties resolve to the smallest node id."""
    if len(pool) == 0:
        return np.array([], dtype=np.int64)
    if len(pool) > 4 * k:
        cutoff = np.partition(scores, k - 1)[k - 1] if len(scores) >= k else np.inf
        subset = np.flatnonzero(scores <= cutoff)  # keeps every boundary tie
    else:
        subset = np.arange(len(pool))
    order = np.lexsort((pool[subset], scores[subset]))[:k]
    return subset[order]


def plan_graph_search(graph: SkillGraph, targets: TargetSet, state: CanonicalFrame,
                      table: ValueTable, A: float, B: float, k: int = 5,
                      lambda_cost: float = 1.0) -> Plan:
    """Entry gate plus next-hop reconstruction under the cached value table."""
    decision = entry_check(graph, state, targets, A, B, k, lambda_cost, table)
    if decision.kind == "estop":
        raise EStopRequired(decision.best_sim, B)
    if decision.kind == "direct":
        entry = decision.entry
    else:
        best = decision.candidates[0]
        if not math.isfinite(best.score):
            raise Unreachable("no candidate can reach the target set")
        entry = best.node
    return reconstruct_path(graph, table, entry, planner_kind="graph")


def best_recovery_entry(graph: SkillGraph, state: CanonicalFrame,
                        table: ValueTable, lambda_cost: float = 1.0) -> int:
    """Ungated entry selection used after an emergency stop.

    The robot is stationary at this point, so every reachable reference node
    is admissible; pick the one minimizing the composite score.
    """
    finite = np.isfinite(table.v_star[:graph.ref_count])
    pool = np.flatnonzero(finite)
    if len(pool) == 0:
        raise Unreachable("target set unreachable from every reference node")
    _, all_dists = graph.query_from(state)
    scores = lambda_cost * (all_dists[pool] + graph.lambda_sw) + table.v_star[pool]
    best = _smallest_by_score(pool, scores, 1)
    return int(pool[best[0]])


def plan_nn(graph: SkillGraph, targets: TargetSet, state: CanonicalFrame,
            B: float, recovery: TargetSet | None = None) -> Plan | TwoStagePlan:
    """Nearest-neighbor planner: attach at the closest target node.

    The plan is the remaining chain through the target prefix. When the best
    attachment is unsafe (sim >= B) and a recovery target is available, the
    result is a two-stage plan: reach the recovery prefix first, then replan
    toward the commanded target.
    """
    rows = np.array(targets.ids)
    dists = graph.distances_from(state, rows)
    entry = int(rows[np.argmin(dists)])
    sim = float(graph.sims_from(state, np.array([entry]))[0])
    if sim < B:
        chain_start = list(rows).index(entry)
        path = tuple(int(i) for i in rows[chain_start:])
        return Plan(entry, path, float(len(path) - 1), "nn", targets.digest)
    if recovery is not None:
        first = plan_nn(graph, recovery, state, B, None)
        if isinstance(first, Plan):
            return TwoStagePlan(first=first, final_target=targets)
        raise EStopRequired(sim, B)
    raise EStopRequired(sim, B)


class PlannerCache:
    """Per-graph cache of value tables keyed by target-set digest.

    Thread model: lookups may race with one writer; inserts are idempotent so
    a duplicated compute is wasteful but harmless.
    """

    def __init__(self, graph):
        self.graph = graph
        self._tables: dict[str, ValueTable] = {}
        self.computes = 0
        self.hits = 0

    def table_for(self, targets: TargetSet) -> ValueTable:
        key = targets.digest
        table = self._tables.get(key)
        if table is not None:
            self.hits += 1
            return table
        self.computes += 1
        table = reverse_sssp(self.graph, targets)
        self._tables[key] = table
        return table


def plan_document(graph: SkillGraph, plan: Plan) -> str:
    """Render a plan as an "sgplan/1" document."""
    header = {
        "graph_digest": graph.content_digest(),
        "planner": plan.planner_kind,
        "entry": graph.node_label(plan.entry),
        "total_cost": plan.cost,
        "length": len(plan.path),
    }
    records = []
    for a, b in zip(plan.path, plan.path[1:]):
        edge = graph.edge_between(a, b)
        records.append({"from": graph.node_label(a), "to": graph.node_label(b),
                        "kind": edge.kind, "cost": edge.w_deploy})
    return dump_document(PLAN_SCHEMA, header, records)
