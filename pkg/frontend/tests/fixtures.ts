import { readFileSync } from "node:fs";

import { GraphSummary, Snapshot } from "../src/types.js";

function load<T>(name: string): T {
  const url = new URL(`../fixtures/${name}`, import.meta.url);
  return JSON.parse(readFileSync(url, "utf-8")) as T;
}

export interface StreamFixture {
  session: string;
  acks: { action: string; skill?: string; applies_at_tick: number }[];
  snapshots: Snapshot[];
}

export const graphSummary = (): GraphSummary => load("graph_summary.json");
export const streamFixture = (): StreamFixture => load("snapshot_stream.json");
