// Thin client for the "sgapi/1" service: JSON posts plus the snapshot
// stream over WebSocket with capped-backoff reconnection. Transports are
// injectable so tests can drive the client with scripted fakes.

import { Ack, GraphSummary, SessionInfo, Snapshot } from "./types.js";

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface ClientDeps {
  fetchFn?: typeof fetch;
  socketFactory?: (url: string) => SocketLike;
  scheduleRetry?: (fn: () => void, ms: number) => void;
}

export interface StreamHandle {
  close(): void;
}

const INITIAL_RETRY_MS = 500;
const MAX_RETRY_MS = 8000;

export class ServiceClient {
  private fetchFn: typeof fetch;
  private socketFactory: (url: string) => SocketLike;
  private scheduleRetry: (fn: () => void, ms: number) => void;

  constructor(private base: string, deps: ClientDeps = {}) {
    this.fetchFn = deps.fetchFn ?? fetch.bind(globalThis);
    this.socketFactory = deps.socketFactory
      ?? ((url) => new WebSocket(url) as unknown as SocketLike);
    this.scheduleRetry = deps.scheduleRetry
      ?? ((fn, ms) => setTimeout(fn, ms));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(this.base + path, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const payload = await response.json();
        detail = payload.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status code
      }
      throw new Error(detail);
    }
    return response.json() as Promise<T>;
  }

  graphSummary(): Promise<GraphSummary> {
    return this.request("GET", "/graph/summary");
  }

  createSession(options: Record<string, unknown> = {}): Promise<SessionInfo> {
    return this.request("POST", "/sessions", options);
  }

  command(sessionId: string, skill: string): Promise<Ack> {
    return this.request("POST", `/sessions/${sessionId}/command`, { skill });
  }

  disturb(sessionId: string, payload: Record<string, unknown>): Promise<Ack> {
    return this.request("POST", `/sessions/${sessionId}/disturb`, payload);
  }

  estop(sessionId: string): Promise<Ack> {
    return this.request("POST", `/sessions/${sessionId}/estop`);
  }

  // Subscribes to the per-tick snapshot stream. Reconnects with doubling
  // backoff (capped) until close() is called; onStatus reports link state so
  // the console can show a banner and disable controls while down.
  stream(sessionId: string, onSnapshot: (s: Snapshot) => void,
         onStatus: (connected: boolean) => void): StreamHandle {
    const wsBase = this.base.replace(/^http/, "ws");
    const url = `${wsBase}/sessions/${sessionId}/stream`;
    let closed = false;
    let retryMs = INITIAL_RETRY_MS;
    let socket: SocketLike | null = null;

    const open = () => {
      if (closed) return;
      socket = this.socketFactory(url);
      socket.onopen = () => {
        retryMs = INITIAL_RETRY_MS;
        onStatus(true);
      };
      socket.onmessage = (ev) => {
        try {
          onSnapshot(JSON.parse(ev.data) as Snapshot);
        } catch {
          // ignore malformed frames
        }
      };
      const lost = () => {
        if (closed) return;
        onStatus(false);
        this.scheduleRetry(open, retryMs);
        retryMs = Math.min(retryMs * 2, MAX_RETRY_MS);
      };
      socket.onclose = lost;
      socket.onerror = () => { /* onclose follows */ };
    };
    open();
    return {
      close() {
        closed = true;
        socket?.close();
      },
    };
  }
}
