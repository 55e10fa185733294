// Console actions with optimistic-disable / ack-enable semantics: inputs
// apply at a tick boundary on the service side, so a control stays locked
// from the moment it is clicked until the ack names the tick it will apply.

import { ServiceClient } from "./api.js";
import { ConsoleModel } from "./model.js";
import { Ack } from "./types.js";

export type ControlId = string; // "command:<skill>" | "disturb" | "estop"

export class ConsoleControls {
  private inFlight = new Set<ControlId>();
  private listeners: (() => void)[] = [];

  constructor(private client: ServiceClient, private model: ConsoleModel,
              private sessionId: string) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  isLocked(control: ControlId): boolean {
    return this.inFlight.has(control);
  }

  async sendSkill(skill: string): Promise<Ack | null> {
    return this.send(`command:${skill}`, `command ${skill}`,
                     () => this.client.command(this.sessionId, skill));
  }

  async sendDisturb(magnitude: number, direction: number[]): Promise<Ack | null> {
    const norm = Math.hypot(...direction) || 1;
    const delta = direction.map((v) => (v / norm) * magnitude);
    return this.send("disturb", `disturb |dq|=${magnitude}`,
                     () => this.client.disturb(this.sessionId, {
                       root_angvel_delta: delta.slice(0, 3),
                     }));
  }

  async sendEstop(): Promise<Ack | null> {
    return this.send("estop", "e-stop",
                     () => this.client.estop(this.sessionId));
  }

  private async send(control: ControlId, label: string,
                     call: () => Promise<Ack>): Promise<Ack | null> {
    if (this.inFlight.has(control)) return null;
    this.inFlight.add(control);
    this.notify();
    try {
      const ack = await call();
      this.model.note(`${label} -> applies at tick ${ack.applies_at_tick}`, "ack");
      return ack;
    } catch (err) {
      this.model.error(`${label} failed: ${(err as Error).message}`);
      return null;
    } finally {
      this.inFlight.delete(control);
      this.notify();
    }
  }

  private notify(): void {
    for (const fn of this.listeners) fn();
  }
}
