// Command flow against a scripted service replaying the captured stream:
// controls lock until the ack, the feed names the apply tick, and the
// command's change event arrives in the stream within one tick.

import { describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { ConsoleControls } from "../src/controls.js";
import { ConsoleModel } from "../src/model.js";
import { Snapshot } from "../src/types.js";
import { streamFixture } from "./fixtures.js";

interface Deferred<T> {
  promise: Promise<T>;
  resolve: (v: T) => void;
}

function deferred<T>(): Deferred<T> {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((r) => { resolve = r; });
  return { promise, resolve };
}

function jsonResponse(payload: unknown, status = 200) {
  return {
    ok: status < 400,
    status,
    json: async () => payload,
  } as Response;
}

function clientWith(handler: (url: string, init?: RequestInit) => Promise<Response>) {
  return new ServiceClient("http://svc", { fetchFn: handler as typeof fetch });
}

describe("command flow", () => {
  const fixture = streamFixture();
  const ack = fixture.acks[0];

  it("locks the control until the ack arrives, then logs the apply tick", async () => {
    const gate = deferred<Response>();
    const client = clientWith((url) => {
      expect(url).toBe(`http://svc/sessions/${fixture.session}/command`);
      return gate.promise;
    });
    const model = new ConsoleModel();
    const controls = new ConsoleControls(client, model, fixture.session);

    const send = controls.sendSkill(ack.skill!);
    expect(controls.isLocked(`command:${ack.skill}`)).toBe(true);

    gate.resolve(jsonResponse({ schema: "sgapi/1", kind: "ack",
                                applies_at_tick: ack.applies_at_tick }));
    const result = await send;
    expect(result?.applies_at_tick).toBe(ack.applies_at_tick);
    expect(controls.isLocked(`command:${ack.skill}`)).toBe(false);
    const last = model.view.feed[model.view.feed.length - 1];
    expect(last.text).toContain(`applies at tick ${ack.applies_at_tick}`);
  });

  it("the command change appears in the live stream within one tick", async () => {
    const client = clientWith(async () =>
      jsonResponse({ schema: "sgapi/1", kind: "ack",
                     applies_at_tick: ack.applies_at_tick }));
    const model = new ConsoleModel();
    const controls = new ConsoleControls(client, model, fixture.session);

    // replay the captured stream up to the click moment
    const before = fixture.snapshots.filter((s) => s.tick < ack.applies_at_tick);
    for (const snapshot of before) model.ingest(snapshot);

    const result = await controls.sendSkill(ack.skill!);
    expect(result).not.toBeNull();

    // the next captured snapshots are what the live stream produced after
    // this same command was posted during capture
    const after = fixture.snapshots.filter((s) => s.tick >= ack.applies_at_tick);
    let seenAt: number | null = null;
    for (const snapshot of after) {
      model.ingest(snapshot);
      const hit = snapshot.events.find(
        (e) => e.kind === "command_change" && e.detail["skill"] === ack.skill);
      if (hit) { seenAt = snapshot.tick; break; }
    }
    expect(seenAt).not.toBeNull();
    expect(seenAt! - result!.applies_at_tick).toBeLessThanOrEqual(1);
    expect(model.view.commanded).toBe(ack.skill);
    const feed = model.view.feed.map((e) => e.text);
    expect(feed.some((t) => t.includes(`command -> ${ack.skill}`))).toBe(true);
  });

  it("double clicks while in flight are dropped", async () => {
    let calls = 0;
    const gate = deferred<Response>();
    const client = clientWith(() => { calls += 1; return gate.promise; });
    const model = new ConsoleModel();
    const controls = new ConsoleControls(client, model, "s0");
    const first = controls.sendSkill("kick");
    const second = controls.sendSkill("kick");
    gate.resolve(jsonResponse({ schema: "sgapi/1", kind: "ack", applies_at_tick: 9 }));
    expect(await second).toBeNull();
    expect((await first)?.applies_at_tick).toBe(9);
    expect(calls).toBe(1);
  });

  it("service errors unlock the control and surface a banner entry", async () => {
    const client = clientWith(async () =>
      jsonResponse({ detail: "unknown skill 'flip'" }, 422));
    const model = new ConsoleModel();
    const controls = new ConsoleControls(client, model, "s0");
    const result = await controls.sendSkill("flip");
    expect(result).toBeNull();
    expect(controls.isLocked("command:flip")).toBe(false);
    expect(model.view.lastError).toContain("unknown skill");
  });

  it("disturb and estop use their endpoints", async () => {
    const seen: string[] = [];
    const client = clientWith(async (url) => {
      seen.push(url);
      return jsonResponse({ schema: "sgapi/1", kind: "ack", applies_at_tick: 3 });
    });
    const model = new ConsoleModel();
    const controls = new ConsoleControls(client, model, "s9");
    await controls.sendDisturb(3.0, [0, 0, 1]);
    await controls.sendEstop();
    expect(seen).toEqual(["http://svc/sessions/s9/disturb",
                          "http://svc/sessions/s9/estop"]);
  });
});
