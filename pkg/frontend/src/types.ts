// Payload shapes for the "sgapi/1" service schema.

export interface EventRecord {
  tick: number;
  kind: string;
  detail: Record<string, unknown>;
}

export interface Snapshot {
  schema: string;
  kind: string;
  tick: number;
  mode: string;
  commanded: string;
  sim: number | null;
  A: number;
  B: number;
  node: string | null; // "skill:frame" or "bufN.k/len"; null while damping
  skill: string | null;
  kappa: number;
  plan_digest: string | null;
  remaining: number;
  robot: {
    root_xy: [number, number];
    root_yaw: number;
    omega: number;
    q_mean: number;
    bodies_xy: [number, number][];
  };
  events: EventRecord[];
}

export interface GraphArc {
  from_skill: string;
  from_frame: number;
  to_skill: string;
  to_frame: number;
  buffers: number;
}

export interface GraphSummary {
  schema: string;
  digest: string;
  skills: Record<string, number>;
  nodes: number;
  refs: number;
  edges: number;
  segments: number;
  arcs: GraphArc[];
  lambda_sw: number;
  A: number;
  B: number;
}

export interface Ack {
  schema: string;
  kind: string;
  applies_at_tick: number;
}

export interface SessionInfo {
  schema: string;
  kind: string;
  id: string;
  pace: string;
  tick_rate: number;
}
