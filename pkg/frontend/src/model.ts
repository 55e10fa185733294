// View model for the operator console.
//
// The console is stateless with respect to simulation truth: every rendered
// field is copied verbatim from the latest snapshot (no extrapolation of
// mode or similarity between ticks). The only client-side state is the
// bounded event feed and the per-control in-flight locks.

import { EventRecord, GraphSummary, Snapshot } from "./types.js";

export const FEED_LIMIT = 200;

export interface FeedEntry {
  tick: number;
  kind: string;
  text: string;
  local: boolean; // true for console-originated entries (sends, acks, errors)
}

export interface GaugeView {
  sim: number | null;
  a: number;
  b: number;
  fraction: number; // needle position in [0, 1]
  aFraction: number;
  bFraction: number;
  zone: "attach" | "plan" | "stop" | "idle";
}

export interface NodeRef {
  raw: string;
  skill: string | null; // null for buffer nodes
  frame: number | null;
  buffer: boolean;
}

export interface ViewState {
  sessionId: string | null;
  connected: boolean;
  tick: number | null;
  mode: string | null;
  commanded: string | null;
  node: NodeRef | null;
  kappa: number;
  skill: string | null;
  planDigest: string | null;
  remaining: number;
  gauge: GaugeView;
  feed: FeedEntry[];
  lastError: string | null;
}

export function parseNode(label: string | null): NodeRef | null {
  if (label === null) return null;
  if (label.startsWith("buf")) {
    return { raw: label, skill: null, frame: null, buffer: true };
  }
  const at = label.lastIndexOf(":");
  return {
    raw: label,
    skill: label.slice(0, at),
    frame: Number(label.slice(at + 1)),
    buffer: false,
  };
}

// The hard threshold can be configured effectively off (very large B); the
// gauge then scales against the soft threshold so the needle stays readable.
export function gaugeView(sim: number | null, a: number, b: number): GaugeView {
  const span = b < 1e6 ? b * 1.05 : Math.max(4 * a, sim ?? 0);
  const clamp = (v: number) => Math.min(Math.max(v / span, 0), 1);
  let zone: GaugeView["zone"] = "idle";
  if (sim !== null) {
    zone = sim <= a ? "attach" : sim >= b ? "stop" : "plan";
  }
  return {
    sim,
    a,
    b,
    fraction: sim === null ? 0 : clamp(sim),
    aFraction: clamp(a),
    bFraction: clamp(b),
    zone,
  };
}

function describeEvent(e: EventRecord): string {
  const d = e.detail as Record<string, any>;
  switch (e.kind) {
    case "command_change":
      return `command -> ${d.skill}`;
    case "plan_installed":
      return `plan ${d.entry} (${d.length} nodes, ${d.trigger})`;
    case "switch_completed":
      return `switch completed: ${d.skill}`;
    case "safety_cross":
      return `sim crossed ${d.which} ${d.direction} (${Number(d.sim).toFixed(2)})`;
    case "mode_change":
      return `mode ${d.from ?? "-"} -> ${d.to}`;
    case "stationary":
      return `stationary (omega ${Number(d.omega).toFixed(3)})`;
    case "no_plan":
      return `no plan: ${d.reason}`;
    default:
      return e.kind;
  }
}

export class ConsoleModel {
  private state: ViewState = {
    sessionId: null,
    connected: false,
    tick: null,
    mode: null,
    commanded: null,
    node: null,
    kappa: 0,
    skill: null,
    planDigest: null,
    remaining: 0,
    gauge: gaugeView(null, 0, 1),
    feed: [],
    lastError: null,
  };

  get view(): ViewState {
    return this.state;
  }

  attach(sessionId: string): void {
    this.state = { ...this.state, sessionId };
  }

  setConnected(connected: boolean): void {
    this.state = { ...this.state, connected };
    if (!connected) this.pushFeed({ tick: this.state.tick ?? -1, kind: "link",
                                    text: "stream disconnected", local: true });
  }

  ingest(snapshot: Snapshot): ViewState {
    const entries = snapshot.events.map((e) => ({
      tick: e.tick,
      kind: e.kind,
      text: describeEvent(e),
      local: false,
    }));
    this.state = {
      ...this.state,
      connected: true,
      tick: snapshot.tick,
      mode: snapshot.mode,
      commanded: snapshot.commanded,
      node: parseNode(snapshot.node),
      kappa: snapshot.kappa,
      skill: snapshot.skill,
      planDigest: snapshot.plan_digest,
      remaining: snapshot.remaining,
      gauge: gaugeView(snapshot.sim, snapshot.A, snapshot.B),
      feed: this.trimmed([...this.state.feed, ...entries]),
    };
    return this.state;
  }

  note(text: string, kind = "console"): void {
    this.pushFeed({ tick: this.state.tick ?? -1, kind, text, local: true });
  }

  error(text: string): void {
    this.state = { ...this.state, lastError: text };
    this.pushFeed({ tick: this.state.tick ?? -1, kind: "error", text, local: true });
  }

  clearError(): void {
    this.state = { ...this.state, lastError: null };
  }

  private pushFeed(entry: FeedEntry): void {
    this.state = { ...this.state, feed: this.trimmed([...this.state.feed, entry]) };
  }

  private trimmed(feed: FeedEntry[]): FeedEntry[] {
    return feed.length > FEED_LIMIT ? feed.slice(feed.length - FEED_LIMIT) : feed;
  }
}

// ---------------------------------------------------------------------------
// lane layout: skills as horizontal lanes, frames as ticks, cross segments as
// arcs between lanes (frame indices are ordinal, so lanes keep paths legible)
// ---------------------------------------------------------------------------

export interface LanePoint {
  x: number;
  y: number;
}

export interface LaneLayout {
  width: number;
  laneHeight: number;
  lanes: { skill: string; length: number; y: number }[];
  arcs: { from: LanePoint; to: LanePoint; buffers: number }[];
  position(skill: string, frame: number): LanePoint | null;
}

export function laneLayout(summary: GraphSummary, width = 720,
                           laneHeight = 56): LaneLayout {
  const skills = Object.keys(summary.skills);
  const maxLen = Math.max(...Object.values(summary.skills));
  const lanes = skills.map((skill, i) => ({
    skill,
    length: summary.skills[skill],
    y: laneHeight / 2 + i * laneHeight,
  }));
  const rows = new Map(lanes.map((l) => [l.skill, l]));
  const position = (skill: string, frame: number): LanePoint | null => {
    const lane = rows.get(skill);
    if (!lane) return null;
    return { x: (frame / Math.max(maxLen - 1, 1)) * (width - 20) + 10, y: lane.y };
  };
  const arcs = summary.arcs.flatMap((a) => {
    const from = position(a.from_skill, a.from_frame);
    const to = position(a.to_skill, a.to_frame);
    return from && to ? [{ from, to, buffers: a.buffers }] : [];
  });
  return { width, laneHeight, lanes, arcs, position };
}
