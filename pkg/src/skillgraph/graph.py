"""Directed weighted skill graphs over reference motion frames.

Nodes are the reference frames of every skill plus synthetic buffer nodes
inserted on wide cross-skill connections. Edges carry two weights: a
training-time weight (1 within a skill, the kinematic distance on cross
connections) and a deployment-time weight (1 within a skill, distance plus a
constant switch penalty on cross connections). Buffer-link edges cost 1 under
both weightings.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, DimensionMismatch, EmptyRestriction, ParseError, SchemaError
from .motion_data import CanonicalFrame, Dataset, canonicalize
from .serialization import digest, dump_document, parse_document
from .validation import as_float_array

GRAPH_SCHEMA = "sggraph/1"

INTRA = "intra"
CROSS = "cross"
BUFFER = "buffer"

_DOT_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


@dataclass(frozen=True)
class RefNode:
    """A node backed by one reference frame of one skill."""
    skill_id: str
    frame_index: int


@dataclass(frozen=True)
class BufferNode:
    """A synthetic node without a reference pose.

    ``position`` counts 1..length from the segment head; ``successor`` is the
    reference node the segment drains into. The remaining-step countdown for
    the node is ``length - position + 1``.
    """
    segment_id: int
    position: int
    length: int
    successor: int

    @property
    def kappa(self) -> int:
        return self.length - self.position + 1


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: str       # intra | cross | buffer
    w_train: float
    w_deploy: float


@dataclass(frozen=True)
class CrossSegment:
    """One sampled cross-skill connection, possibly expanded with buffers."""
    segment_id: int
    source: int          # reference node on the source skill
    target: int          # reference node on the target skill
    distance: float
    n_buffers: int
    buffer_ids: tuple[int, ...]


@dataclass
class GraphConfig:
    """Build-time knobs for graph construction."""

    cross_stride: int = 10          # frames between sampled cross-edge sources
    d_max: float | None = None      # optional cutoff on cross-edge distance
    delta_buf: float = 0.4          # distance per buffer node
    n_max: int = 30                 # cap on buffer nodes per segment
    lambda_sw: float | None = None  # switch penalty; None = half the median cross distance
    w_q: float = 1.0
    w_dq: float = 1.0
    w_p: float = 1.0

    def validate(self) -> None:
        if self.cross_stride < 1:
            raise ConfigError("cross_stride must be >= 1")
        if self.delta_buf <= 0:
            raise ConfigError("delta_buf must be > 0")
        if self.n_max < 0:
            raise ConfigError("n_max must be >= 0")
        if self.lambda_sw is not None and self.lambda_sw < 0:
            raise ConfigError("lambda_sw must be >= 0")
        if self.d_max is not None and self.d_max < 0:
            raise ConfigError("d_max must be >= 0")
        if min(self.w_q, self.w_dq, self.w_p) < 0:
            raise ConfigError("term weights must be >= 0")

    @property
    def term_weights(self) -> tuple[float, float, float]:
        return (self.w_q, self.w_dq, self.w_p)

    def to_dict(self) -> dict:
        return {
            "cross_stride": self.cross_stride, "d_max": self.d_max,
            "delta_buf": self.delta_buf, "n_max": self.n_max,
            "lambda_sw": self.lambda_sw,
            "w_q": self.w_q, "w_dq": self.w_dq, "w_p": self.w_p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


def distance(a: CanonicalFrame, b: CanonicalFrame,
             weights: tuple[float, float, float] = (1.0, 1.0, 1.0)) -> float:
    """Weighted L1 separation of two canonical states.

    Sums absolute differences over joint positions, joint velocities and
    canonical body positions, each term scaled by its weight.
    """
    if a.q.shape != b.q.shape or a.dq.shape != b.dq.shape:
        raise DimensionMismatch(f"joint dims differ: {a.q.shape} vs {b.q.shape}")
    if a.p_hat.shape != b.p_hat.shape:
        raise DimensionMismatch(f"body dims differ: {a.p_hat.shape} vs {b.p_hat.shape}")
    w_q, w_dq, w_p = weights
    return float(w_q * np.abs(a.q - b.q).sum()
                 + w_dq * np.abs(a.dq - b.dq).sum()
                 + w_p * np.abs(a.p_hat - b.p_hat).sum())


def buffer_count(d: float, config: GraphConfig) -> int:
    """Number of buffer nodes bridging a cross connection of distance d."""
    if d < 0:
        raise ConfigError(f"distance must be >= 0, got {d}")
    return min(config.n_max, int(round(d / config.delta_buf)))


@dataclass
class SkillGraph:
    """Immutable directed weighted graph over reference and buffer nodes.

    Reference nodes occupy ids 0..ref_count-1 in dataset order; buffer nodes
    follow. All queries are read-only and safe to share across threads.
    """

    nodes: list
    edges: list[Edge]
    out: list[list[int]]                  # node id -> edge indices
    skill_nodes: dict[str, list[int]]     # skill -> ordered reference node ids
    segments: list[CrossSegment]
    config: GraphConfig
    lambda_sw: float                      # resolved switch penalty
    frames: list[CanonicalFrame]          # per reference node
    fps: float
    feet_indices: list[int]
    dataset_digest: str
    _q: np.ndarray = field(repr=False, default=None)
    _dq: np.ndarray = field(repr=False, default=None)
    _ph: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._q is None and self.frames:
            self._q = np.stack([f.q for f in self.frames])
            self._dq = np.stack([f.dq for f in self.frames])
            self._ph = np.stack([f.p_hat.ravel() for f in self.frames])
        w_q, w_dq, w_p = self.config.term_weights
        self._feat = np.hstack([self._q * w_q, self._dq * w_dq, self._ph * w_p])
        sim_cols = self._q.shape[1] * 2
        self._sim_cols = sim_cols
        # column-sum matrix: col 0 totals everything, col 1 the pose-velocity part
        self._sums = np.zeros((self._feat.shape[1], 2))
        self._sums[:, 0] = 1.0
        self._sums[:sim_cols, 1] = 1.0
        self._scratch = threading.local()

    # -- basic structure ----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def ref_count(self) -> int:
        return len(self.frames)

    def out_edges(self, node_id: int) -> list[Edge]:
        return [self.edges[i] for i in self.out[node_id]]

    def edge_between(self, src: int, dst: int) -> Edge | None:
        for i in self.out[src]:
            if self.edges[i].dst == dst:
                return self.edges[i]
        return None

    def is_reference(self, node_id: int) -> bool:
        return node_id < self.ref_count

    def node_skill(self, node_id: int) -> str:
        node = self.nodes[node_id]
        if isinstance(node, RefNode):
            return node.skill_id
        return self.nodes[node.successor].skill_id

    def node_label(self, node_id: int) -> str:
        node = self.nodes[node_id]
        if isinstance(node, RefNode):
            return f"{node.skill_id}:{node.frame_index}"
        return f"buf{node.segment_id}.{node.position}/{node.length}"

    def guidance_frame(self, node_id: int) -> tuple[CanonicalFrame, int, int]:
        """Target frame, countdown and backing reference node for a node.

        Buffer nodes have no pose of their own: they report the segment's
        successor frame together with the remaining-step countdown.
        """
        node = self.nodes[node_id]
        if isinstance(node, RefNode):
            return self.frames[node_id], 0, node_id
        return self.frames[node.successor], node.kappa, node.successor

    def next_intra(self, node_id: int) -> int | None:
        """Successor along the node's own chain (intra for refs, link for buffers)."""
        for i in self.out[node_id]:
            e = self.edges[i]
            if e.kind == INTRA or (e.kind == BUFFER and not self.is_reference(node_id)):
                return e.dst
        return None

    # -- vectorized queries --------------------------------------------------

    def distances_from(self, state: CanonicalFrame, rows: np.ndarray | None = None) -> np.ndarray:
        """Weighted L1 distance from state to every (or selected) reference node."""
        q, dq, ph = self._q, self._dq, self._ph
        if rows is not None:
            q, dq, ph = q[rows], dq[rows], ph[rows]
        w_q, w_dq, w_p = self.config.term_weights
        return (w_q * np.abs(q - state.q).sum(axis=1)
                + w_dq * np.abs(dq - state.dq).sum(axis=1)
                + w_p * np.abs(ph - state.p_hat.ravel()).sum(axis=1))

    def sims_from(self, state: CanonicalFrame, rows: np.ndarray | None = None) -> np.ndarray:
        """Pose-velocity similarity (q and dq terms only) to reference nodes."""
        q, dq = self._q, self._dq
        if rows is not None:
            q, dq = q[rows], dq[rows]
        w_q, w_dq, _ = self.config.term_weights
        return (w_q * np.abs(q - state.q).sum(axis=1)
                + w_dq * np.abs(dq - state.dq).sum(axis=1))

    def query_from(self, state: CanonicalFrame) -> tuple[np.ndarray, np.ndarray]:
        """(similarity, distance) to every reference node in one pass.

        Uses a thread-local scratch buffer plus a matmul reduction; this is
        the replanning hot path and must stay well under a millisecond on
        graphs with ~10k nodes.
        """
        w_q, w_dq, w_p = self.config.term_weights
        x = np.concatenate([state.q * w_q, state.dq * w_dq, state.p_hat.ravel() * w_p])
        buf = getattr(self._scratch, "buf", None)
        if buf is None or buf.shape != self._feat.shape:
            buf = np.empty_like(self._feat)
            self._scratch.buf = buf
        np.subtract(self._feat, x, out=buf)
        np.abs(buf, out=buf)
        sums = buf @ self._sums
        return sums[:, 1], sums[:, 0]

    def content_digest(self) -> str:
        return digest([self.dataset_digest, self.config.to_dict(), self.lambda_sw,
                       self.n_nodes, len(self.edges)])


def nearest_reference(graph: SkillGraph, state: CanonicalFrame,
                      restrict: set[str] | None = None) -> tuple[int, float]:
    """Reference node minimizing the kinematic distance to a state.

    Exact ties resolve to the smallest (skill_id, frame_index) pair.
    """
    if restrict is not None:
        rows_list: list[int] = []
        for skill in restrict:
            rows_list.extend(graph.skill_nodes.get(skill, []))
        if not rows_list:
            raise EmptyRestriction(f"no reference nodes for skills {sorted(restrict)}")
        rows = np.array(sorted(rows_list))
    else:
        rows = None
    d = graph.distances_from(state, rows)
    ids = rows if rows is not None else np.arange(graph.ref_count)
    best = d.min()
    tied = ids[d == best]
    if len(tied) > 1:
        key = min((graph.nodes[i].skill_id, graph.nodes[i].frame_index, i) for i in tied)
        return int(key[2]), float(best)
    return int(tied[0]), float(best)


def build_graph(dataset: Dataset, config: GraphConfig | None = None) -> SkillGraph:
    """Construct the skill graph for a dataset.

    Intra edges chain consecutive frames of each skill with unit weights. For
    every ordered skill pair, every cross_stride-th source frame connects to
    its nearest frame in the target skill; connections wider than d_max (when
    set) are dropped, and the rest become either a direct cross edge or a
    buffer chain whose length grows with the gap.
    """
    config = config or GraphConfig()
    config.validate()
    dataset.validate()

    frames: list[CanonicalFrame] = []
    skill_nodes: dict[str, list[int]] = {}
    nodes: list = []
    for seq in dataset.skills:
        ids = []
        for t, frame in enumerate(seq.frames):
            ids.append(len(nodes))
            nodes.append(RefNode(seq.skill_id, t))
            frames.append(canonicalize(frame))
        skill_nodes[seq.skill_id] = ids

    edges: list[Edge] = []
    for seq in dataset.skills:
        ids = skill_nodes[seq.skill_id]
        for a, b in zip(ids, ids[1:]):
            edges.append(Edge(a, b, INTRA, 1.0, 1.0))

    # Pass 1: sample candidate cross connections and their distances. The
    # stacked scan reduces each term separately in the same order as
    # distance(), so stored segment distances reproduce it bit-for-bit.
    w_q, w_dq, w_p = config.term_weights
    stacks: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    for skill, ids in skill_nodes.items():
        stacks[skill] = (np.stack([frames[i].q for i in ids]),
                         np.stack([frames[i].dq for i in ids]),
                         np.stack([frames[i].p_hat.ravel() for i in ids]))
    candidates: list[tuple[int, int, float]] = []
    for src_seq in dataset.skills:
        src_ids = skill_nodes[src_seq.skill_id]
        sq, sdq, sph = stacks[src_seq.skill_id]
        for dst_seq in dataset.skills:
            if dst_seq.skill_id == src_seq.skill_id:
                continue
            dst_ids = skill_nodes[dst_seq.skill_id]
            dq_, ddq, dph = stacks[dst_seq.skill_id]
            for i in range(0, len(src_ids), config.cross_stride):
                row = (w_q * np.abs(dq_ - sq[i]).sum(axis=1)
                       + w_dq * np.abs(ddq - sdq[i]).sum(axis=1)
                       + w_p * np.abs(dph - sph[i]).sum(axis=1))
                j = int(np.argmin(row))            # first minimum = lowest frame index
                d = float(row[j])
                if config.d_max is not None and d > config.d_max:
                    continue
                candidates.append((src_ids[i], dst_ids[j], d))

    if config.lambda_sw is not None:
        lambda_sw = float(config.lambda_sw)
    elif candidates:
        lambda_sw = 0.5 * float(np.median([c[2] for c in candidates]))
    else:
        lambda_sw = 0.0

    # Pass 2: emit cross edges / buffer chains.
    segments: list[CrossSegment] = []
    for seg_id, (u, v, d) in enumerate(candidates):
        n = buffer_count(d, config)
        w_deploy = d + lambda_sw
        if n == 0:
            edges.append(Edge(u, v, CROSS, d, w_deploy))
            segments.append(CrossSegment(seg_id, u, v, d, 0, ()))
            continue
        buf_ids = []
        for pos in range(1, n + 1):
            buf_ids.append(len(nodes))
            nodes.append(BufferNode(seg_id, pos, n, v))
        edges.append(Edge(u, buf_ids[0], CROSS, d, w_deploy))
        for a, b in zip(buf_ids, buf_ids[1:]):
            edges.append(Edge(a, b, BUFFER, 1.0, 1.0))
        edges.append(Edge(buf_ids[-1], v, BUFFER, 1.0, 1.0))
        segments.append(CrossSegment(seg_id, u, v, d, n, tuple(buf_ids)))

    out: list[list[int]] = [[] for _ in nodes]
    for idx, e in enumerate(edges):
        out[e.src].append(idx)

    return SkillGraph(
        nodes=nodes, edges=edges, out=out, skill_nodes=skill_nodes,
        segments=segments, config=config, lambda_sw=lambda_sw, frames=frames,
        fps=dataset.fps, feet_indices=list(dataset.feet_indices),
        dataset_digest=dataset.content_digest(),
    )


def without_cross_edges(graph: SkillGraph) -> SkillGraph:
    """Ablated copy keeping only the per-skill chains (no cross connections)."""
    ref = graph.ref_count
    nodes = list(graph.nodes[:ref])
    edges = [e for e in graph.edges if e.kind == INTRA]
    out: list[list[int]] = [[] for _ in nodes]
    for idx, e in enumerate(edges):
        out[e.src].append(idx)
    return SkillGraph(
        nodes=nodes, edges=edges, out=out, skill_nodes=dict(graph.skill_nodes),
        segments=[], config=graph.config, lambda_sw=graph.lambda_sw,
        frames=graph.frames, fps=graph.fps, feet_indices=list(graph.feet_indices),
        dataset_digest=graph.dataset_digest,
        _q=graph._q, _dq=graph._dq, _ph=graph._ph,
    )


class SkillGraphBuilder(BaseEstimator):
    """Estimator-style wrapper around build_graph.

    Parameters mirror GraphConfig; fit(dataset) stores the built graph on
    ``graph_``. Using the sklearn base class keeps get_params/set_params and
    clone() working so builds slot into parameter sweeps.
    """

    def __init__(self, cross_stride=10, d_max=None, delta_buf=0.4, n_max=30,
                 lambda_sw=None, w_q=1.0, w_dq=1.0, w_p=1.0):
        self.cross_stride = cross_stride
        self.d_max = d_max
        self.delta_buf = delta_buf
        self.n_max = n_max
        self.lambda_sw = lambda_sw
        self.w_q = w_q
        self.w_dq = w_dq
        self.w_p = w_p

    def _config(self) -> GraphConfig:
        return GraphConfig(cross_stride=self.cross_stride, d_max=self.d_max,
                           delta_buf=self.delta_buf, n_max=self.n_max,
                           lambda_sw=self.lambda_sw, w_q=self.w_q,
                           w_dq=self.w_dq, w_p=self.w_p)

    def fit(self, X: Dataset, y=None) -> "SkillGraphBuilder":
        self.graph_ = build_graph(X, self._config())
        return self


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def export_graph(graph: SkillGraph, fmt: str = "structured") -> str:
    """Serialize a graph to the structured text format or to DOT."""
    if fmt == "structured":
        return _export_structured(graph)
    if fmt == "dot":
        return _export_dot(graph)
    raise ConfigError(f"unknown export format {fmt!r}")


def _export_structured(graph: SkillGraph) -> str:
    header = {
        "config": graph.config.to_dict(),
        "lambda_sw": graph.lambda_sw,
        "fps": graph.fps,
        "feet_indices": graph.feet_indices,
        "dataset_digest": graph.dataset_digest,
        "counts": {"nodes": graph.n_nodes, "edges": len(graph.edges),
                   "refs": graph.ref_count, "segments": len(graph.segments)},
    }
    records = []
    for i, node in enumerate(graph.nodes):
        if isinstance(node, RefNode):
            f = graph.frames[i]
            records.append({"rec": "node", "id": i, "kind": "ref",
                            "skill": node.skill_id, "frame": node.frame_index,
                            "q": f.q, "dq": f.dq, "p_hat": f.p_hat,
                            "root_angvel": f.root_angvel, "contacts": f.contacts})
        else:
            records.append({"rec": "node", "id": i, "kind": "buf",
                            "segment": node.segment_id, "position": node.position,
                            "length": node.length, "successor": node.successor})
    for e in graph.edges:
        records.append({"rec": "edge", "src": e.src, "dst": e.dst, "kind": e.kind,
                        "w_train": e.w_train, "w_deploy": e.w_deploy})
    for s in graph.segments:
        records.append({"rec": "segment", "id": s.segment_id, "source": s.source,
                        "target": s.target, "distance": s.distance,
                        "n_buffers": s.n_buffers, "buffers": list(s.buffer_ids)})
    return dump_document(GRAPH_SCHEMA, header, records)


def load_graph_text(text: str) -> SkillGraph:
    header, records = parse_document(text, GRAPH_SCHEMA)
    config = GraphConfig.from_dict(header["config"])
    nodes: dict[int, object] = {}
    frames: dict[int, CanonicalFrame] = {}
    edges: list[Edge] = []
    segments: list[CrossSegment] = []
    for rec in records:
        kind = rec.get("rec")
        if kind == "node":
            nid = int(rec["id"])
            if rec["kind"] == "ref":
                nodes[nid] = RefNode(rec["skill"], int(rec["frame"]))
                frames[nid] = CanonicalFrame(
                    q=as_float_array(rec["q"], "q"),
                    dq=as_float_array(rec["dq"], "dq"),
                    p_hat=as_float_array(rec["p_hat"], "p_hat"),
                    root_angvel=as_float_array(rec["root_angvel"], "root_angvel"),
                    contacts=np.asarray(rec["contacts"], dtype=bool),
                )
            else:
                nodes[nid] = BufferNode(int(rec["segment"]), int(rec["position"]),
                                        int(rec["length"]), int(rec["successor"]))
        elif kind == "edge":
            edges.append(Edge(int(rec["src"]), int(rec["dst"]), rec["kind"],
                              float(rec["w_train"]), float(rec["w_deploy"])))
        elif kind == "segment":
            segments.append(CrossSegment(int(rec["id"]), int(rec["source"]),
                                         int(rec["target"]), float(rec["distance"]),
                                         int(rec["n_buffers"]),
                                         tuple(int(b) for b in rec["buffers"])))
        else:
            raise ParseError(f"unknown record type {kind!r}")
    if sorted(nodes) != list(range(len(nodes))):
        raise SchemaError("node ids are not contiguous")
    node_list = [nodes[i] for i in range(len(nodes))]
    frame_list = [frames[i] for i in range(len(frames))]
    skill_nodes: dict[str, list[int]] = {}
    for i, node in enumerate(node_list):
        if isinstance(node, RefNode):
            skill_nodes.setdefault(node.skill_id, []).append(i)
    out: list[list[int]] = [[] for _ in node_list]
    for idx, e in enumerate(edges):
        out[e.src].append(idx)
    return SkillGraph(
        nodes=node_list, edges=edges, out=out, skill_nodes=skill_nodes,
        segments=segments, config=config, lambda_sw=float(header["lambda_sw"]),
        frames=frame_list, fps=float(header["fps"]),
        feet_indices=[int(i) for i in header["feet_indices"]],
        dataset_digest=header["dataset_digest"],
    )


def load_graph(path: str | Path) -> SkillGraph:
    return load_graph_text(Path(path).read_text(encoding="utf-8"))


def _export_dot(graph: SkillGraph) -> str:
    skills = list(graph.skill_nodes)
    color = {s: _DOT_PALETTE[i % len(_DOT_PALETTE)] for i, s in enumerate(skills)}
    lines = ["digraph skillgraph {", "  rankdir=LR;", "  node [style=filled];"]
    for i, node in enumerate(graph.nodes):
        if isinstance(node, RefNode):
            lines.append(f'  n{i} [label="{graph.node_label(i)}" fillcolor="{color[node.skill_id]}"];')
        else:
            lines.append(f'  n{i} [label="{graph.node_label(i)}" shape=point buffer=true];')
    for e in graph.edges:
        style = ' style=dashed' if e.kind != INTRA else ""
        lines.append(f'  n{e.src} -> n{e.dst} [label="{e.w_deploy:.3g}"{style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
