// Browser entry point: create (or join) a session and wire the console.

import { ServiceClient } from "./api.js";
import { ConsoleControls } from "./controls.js";
import { ConsoleModel, laneLayout, LaneLayout } from "./model.js";
import { applyRenderModel, buildRenderModel, renderLanes } from "./render.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api")
    || (document.getElementById("root") as HTMLElement | null)?.dataset.api
    || window.location.origin;
  const client = new ServiceClient(base);
  const model = new ConsoleModel();
  let layout: LaneLayout | null = null;

  const redraw = () => applyRenderModel(document, buildRenderModel(model.view, layout));

  try {
    const summary = await client.graphSummary();
    layout = laneLayout(summary);
    renderLanes(document, layout);

    let sessionId = params.get("session");
    if (!sessionId) {
      const session = await client.createSession({ pace: "realtime", tick_rate: 20 });
      sessionId = session.id;
    }
    model.attach(sessionId);

    const controls = new ConsoleControls(client, model, sessionId);
    const refreshers: (() => void)[] = [];
    const refreshControls = () => { for (const fn of refreshers) fn(); };
    controls.onChange(refreshControls);

    const bind = (button: HTMLButtonElement, control: string,
                  action: () => Promise<unknown>) => {
      button.onclick = async () => { await action(); redraw(); };
      // a control is usable only while the stream is live and no send is
      // already in flight for it
      refreshers.push(() => {
        button.disabled = controls.isLocked(control) || !model.view.connected;
      });
    };

    const skillsBox = document.getElementById("skills");
    for (const skill of Object.keys(summary.skills)) {
      const button = document.createElement("button");
      button.textContent = skill;
      bind(button, `command:${skill}`, () => controls.sendSkill(skill));
      skillsBox?.appendChild(button);
    }
    const estopButton = document.getElementById("estop") as HTMLButtonElement | null;
    if (estopButton) bind(estopButton, "estop", () => controls.sendEstop());
    const disturbButton = document.getElementById("disturb") as HTMLButtonElement | null;
    if (disturbButton) {
      bind(disturbButton, "disturb", () => {
        const magnitude = Number(
          (document.getElementById("disturb-mag") as HTMLInputElement | null)?.value ?? "3");
        return controls.sendDisturb(magnitude, [0.2, 0.2, 1.0]);
      });
    }

    client.stream(sessionId,
      (snapshot) => { model.ingest(snapshot); refreshControls(); redraw(); },
      (connected) => { model.setConnected(connected); refreshControls(); redraw(); });
    refreshControls();
  } catch (err) {
    model.error(`service unreachable: ${(err as Error).message}`);
  }
  redraw();
}

boot();
