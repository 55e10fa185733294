import { describe, expect, it } from "vitest";

import { ServiceClient, SocketLike } from "../src/api.js";
import { Snapshot } from "../src/types.js";
import { streamFixture } from "./fixtures.js";

class FakeSocket implements SocketLike {
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;
  closedByClient = false;

  constructor(public url: string) {}

  open(): void { this.onopen?.(); }
  push(payload: unknown): void { this.onmessage?.({ data: JSON.stringify(payload) }); }
  drop(): void { this.onclose?.(); }
  close(): void { this.closedByClient = true; }
}

function streamingClient() {
  const sockets: FakeSocket[] = [];
  const retries: { fn: () => void; ms: number }[] = [];
  const client = new ServiceClient("http://svc", {
    socketFactory: (url) => {
      const s = new FakeSocket(url);
      sockets.push(s);
      return s;
    },
    scheduleRetry: (fn, ms) => retries.push({ fn, ms }),
  });
  return { client, sockets, retries };
}

describe("snapshot stream", () => {
  const { snapshots } = streamFixture();

  it("delivers parsed snapshots in order", () => {
    const { client, sockets } = streamingClient();
    const seen: Snapshot[] = [];
    client.stream("s0", (s) => seen.push(s), () => {});
    sockets[0].open();
    for (const s of snapshots.slice(0, 10)) sockets[0].push(s);
    expect(seen.map((s) => s.tick)).toEqual(snapshots.slice(0, 10).map((s) => s.tick));
    expect(sockets[0].url).toBe("ws://svc/sessions/s0/stream");
  });

  it("reconnects with doubling, capped backoff", () => {
    const { client, sockets, retries } = streamingClient();
    const status: boolean[] = [];
    client.stream("s0", () => {}, (up) => status.push(up));
    sockets[0].open();
    sockets[0].drop();
    expect(status).toEqual([true, false]);
    expect(retries[0].ms).toBe(500);
    retries[0].fn(); // reconnect attempt fails immediately
    sockets[1].drop();
    retries[1].fn();
    sockets[2].drop();
    expect(retries.map((r) => r.ms)).toEqual([500, 1000, 2000]);
    // a successful connection resets the backoff
    retries[2].fn();
    sockets[3].open();
    sockets[3].drop();
    expect(retries[3].ms).toBe(500);
  });

  it("close() stops reconnecting", () => {
    const { client, sockets, retries } = streamingClient();
    const handle = client.stream("s0", () => {}, () => {});
    sockets[0].open();
    handle.close();
    expect(sockets[0].closedByClient).toBe(true);
    sockets[0].drop();
    expect(retries.length).toBe(0);
  });

  it("ignores malformed frames", () => {
    const { client, sockets } = streamingClient();
    const seen: Snapshot[] = [];
    client.stream("s0", (s) => seen.push(s), () => {});
    sockets[0].open();
    sockets[0].onmessage?.({ data: "not json" });
    sockets[0].push(snapshots[0]);
    expect(seen.length).toBe(1);
  });
});

describe("requests", () => {
  it("graph summary and session creation hit their endpoints", async () => {
    const calls: { url: string; method?: string }[] = [];
    const client = new ServiceClient("http://svc", {
      fetchFn: (async (url: string, init?: RequestInit) => {
        calls.push({ url, method: init?.method });
        return { ok: true, status: 200, json: async () => ({ id: "s1" }) } as Response;
      }) as typeof fetch,
    });
    await client.graphSummary();
    await client.createSession({ pace: "realtime" });
    expect(calls).toEqual([
      { url: "http://svc/graph/summary", method: "GET" },
      { url: "http://svc/sessions", method: "POST" },
    ]);
  });

  it("surfaces error payload details", async () => {
    const client = new ServiceClient("http://svc", {
      fetchFn: (async () => ({
        ok: false, status: 429,
        json: async () => ({ detail: "session limit reached" }),
      }) as unknown as Response) as typeof fetch,
    });
    await expect(client.createSession()).rejects.toThrow("session limit reached");
  });
});
