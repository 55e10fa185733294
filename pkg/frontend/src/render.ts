// Rendering is split in two: buildRenderModel() maps the view state to plain
// strings/geometry (what the fidelity tests assert on), applyRenderModel()
// writes it into the DOM.

import { LaneLayout, ViewState } from "./model.js";

export interface RenderModel {
  sessionLabel: string;
  connectionBanner: string | null;
  modeBadge: string;
  tickText: string;
  commandedText: string;
  simText: string;
  nodeText: string;
  kappaText: string;
  planText: string;
  gaugeNeedlePct: number;
  gaugeAPct: number;
  gaugeBPct: number;
  gaugeZone: string;
  feedLines: string[];
  marker: { x: number; y: number; buffer: boolean } | null;
}

export function buildRenderModel(view: ViewState, layout: LaneLayout | null): RenderModel {
  const node = view.node;
  let marker: RenderModel["marker"] = null;
  if (node && layout) {
    if (!node.buffer && node.skill !== null && node.frame !== null) {
      const at = layout.position(node.skill, node.frame);
      if (at) marker = { ...at, buffer: false };
    } else if (node.buffer && view.skill) {
      // buffer nodes have no frame of their own; pin the marker to the
      // segment successor's lane start side
      const at = layout.position(view.skill, 0);
      if (at) marker = { ...at, buffer: true };
    }
  }
  return {
    sessionLabel: view.sessionId ?? "-",
    connectionBanner: view.connected ? null : "stream disconnected, retrying...",
    modeBadge: view.mode ?? "-",
    tickText: view.tick === null ? "-" : String(view.tick),
    commandedText: view.commanded ?? "-",
    simText: view.gauge.sim === null ? "-" : view.gauge.sim.toFixed(3),
    nodeText: node ? node.raw : "-",
    kappaText: String(view.kappa),
    planText: view.planDigest === null ? "-"
      : `${view.planDigest} (+${view.remaining})`,
    gaugeNeedlePct: view.gauge.fraction * 100,
    gaugeAPct: view.gauge.aFraction * 100,
    gaugeBPct: view.gauge.bFraction * 100,
    gaugeZone: view.gauge.zone,
    feedLines: view.feed.slice(-12).map((e) => `[${e.tick}] ${e.text}`),
    marker,
  };
}

export function applyRenderModel(doc: Document, rm: RenderModel): void {
  const text = (id: string, value: string) => {
    const el = doc.getElementById(id);
    if (el) el.textContent = value;
  };
  text("session", rm.sessionLabel);
  text("mode", rm.modeBadge);
  text("tick", rm.tickText);
  text("commanded", rm.commandedText);
  text("sim", rm.simText);
  text("node", rm.nodeText);
  text("kappa", rm.kappaText);
  text("plan", rm.planText);

  const banner = doc.getElementById("banner");
  if (banner) {
    banner.textContent = rm.connectionBanner ?? "";
    (banner as HTMLElement).style.display = rm.connectionBanner ? "block" : "none";
  }
  const badge = doc.getElementById("mode");
  if (badge) badge.className = `badge mode-${rm.modeBadge}`;

  const needle = doc.getElementById("gauge-needle") as HTMLElement | null;
  if (needle) needle.style.left = `${rm.gaugeNeedlePct}%`;
  const markA = doc.getElementById("gauge-a") as HTMLElement | null;
  if (markA) markA.style.left = `${rm.gaugeAPct}%`;
  const markB = doc.getElementById("gauge-b") as HTMLElement | null;
  if (markB) markB.style.left = `${rm.gaugeBPct}%`;
  const gauge = doc.getElementById("gauge") as HTMLElement | null;
  if (gauge) gauge.className = `gauge zone-${rm.gaugeZone}`;

  const feed = doc.getElementById("feed");
  if (feed) {
    feed.textContent = "";
    for (const line of rm.feedLines) {
      const div = doc.createElement("div");
      div.textContent = line;
      feed.appendChild(div);
    }
  }
  const marker = doc.getElementById("marker") as HTMLElement | null;
  if (marker) {
    if (rm.marker) {
      marker.style.display = "block";
      marker.setAttribute("cx", String(rm.marker.x));
      marker.setAttribute("cy", String(rm.marker.y));
      marker.setAttribute("fill", rm.marker.buffer ? "#f0a030" : "#d62728");
    } else {
      marker.style.display = "none";
    }
  }
}

export function renderLanes(doc: Document, layout: LaneLayout): void {
  const svg = doc.getElementById("lanes");
  if (!svg) return;
  svg.setAttribute("viewBox", `0 0 ${layout.width} ${layout.lanes.length * layout.laneHeight}`);
  const ns = "http://www.w3.org/2000/svg";
  svg.textContent = "";
  for (const lane of layout.lanes) {
    const line = doc.createElementNS(ns, "line");
    line.setAttribute("x1", "10");
    line.setAttribute("x2", String(layout.width - 10));
    line.setAttribute("y1", String(lane.y));
    line.setAttribute("y2", String(lane.y));
    line.setAttribute("class", "lane");
    svg.appendChild(line);
    const label = doc.createElementNS(ns, "text");
    label.setAttribute("x", "12");
    label.setAttribute("y", String(lane.y - 8));
    label.setAttribute("class", "lane-label");
    label.textContent = `${lane.skill} (${lane.length})`;
    svg.appendChild(label);
  }
  for (const arc of layout.arcs) {
    const midY = (arc.from.y + arc.to.y) / 2 - 18;
    const path = doc.createElementNS(ns, "path");
    path.setAttribute("d", `M ${arc.from.x} ${arc.from.y} Q ${(arc.from.x + arc.to.x) / 2} ${midY} ${arc.to.x} ${arc.to.y}`);
    path.setAttribute("class", arc.buffers > 0 ? "arc buffered" : "arc");
    svg.appendChild(path);
  }
  const marker = doc.createElementNS(ns, "circle");
  marker.setAttribute("id", "marker");
  marker.setAttribute("r", "6");
  marker.setAttribute("fill", "#d62728");
  svg.appendChild(marker);
}
