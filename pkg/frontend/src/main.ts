/** Wires the exploration pane, mesh view, and session transport. */

import { fetchMesh, fetchSpace } from "./api.js";
import { MeshView } from "./meshView.js";
import { SpacePane } from "./spacePane.js";
import { SessionTransport } from "./transport.js";
import { ViewState } from "./viewstate.js";

function statusLine(state: ViewState, extra: string): string {
  const drop = (state.dropRate * 100).toFixed(1);
  const active = state.active === null ? "-" : `${state.active}`;
  return `active ${active} | frames ${state.sink.applied} (dropped ${state.droppedFrames}, ${drop}%) ${extra}`;
}

async function boot(): Promise<void> {
  const paneCanvas = document.getElementById("space") as HTMLCanvasElement;
  const meshCanvas = document.getElementById("mesh") as HTMLCanvasElement;
  const status = document.getElementById("status") as HTMLElement;
  const banner = document.getElementById("banner") as HTMLElement;
  const replayBtn = document.getElementById("replay") as HTMLButtonElement;

  let manifest;
  try {
    manifest = await fetchSpace();
  } catch (err) {
    banner.textContent = `failed to load space: ${err}`;
    banner.style.display = "block";
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.onclick = () => window.location.reload();
    banner.appendChild(retry);
    return;
  }
  if (manifest.landmarks.length === 0) {
    banner.textContent = "the bundle has no landmarks";
    banner.style.display = "block";
    return;
  }

  const state = new ViewState();
  state.manifest = manifest;
  await Promise.all(
    manifest.landmarks.map(async (lm) => state.cacheMesh(lm.id, await fetchMesh(lm.id))),
  );

  const pane = new SpacePane(paneCanvas, manifest, state);
  const view = new MeshView(meshCanvas);
  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/api/session`;
  const transport = new SessionTransport(wsUrl, (url) => new WebSocket(url));

  transport.on("control", (msg) => state.control(msg));
  transport.on("frame", (frame) => state.frame(frame));
  transport.on("down", () => {
    banner.textContent = "connection lost, reconnecting...";
    banner.style.display = "block";
  });
  transport.on("reconnected", () => {
    banner.style.display = "none";
    // Trajectory display survives; restart the session where we were.
    if (state.active !== null) transport.startSession(state.active);
  });
  transport.connect();

  pane.onStart = (landmark) => transport.startSession(landmark);
  let lastSent = 0;
  pane.onDrag = (target) => {
    const now = performance.now();
    if (now - lastSent < 33) return; // 30 Hz cursor updates
    lastSent = now;
    state.recordDrag(target);
    transport.drag(target);
  };

  replayBtn.onclick = () => {
    // Re-walk the recorded trajectory from its first point.
    const path = state.trajectory.slice();
    if (path.length < 2 || state.active === null) return;
    let i = 0;
    const step = () => {
      if (i >= path.length) return;
      transport.drag(path[i]);
      i += 1;
      setTimeout(step, 33);
    };
    step();
  };

  const render = () => {
    pane.draw();
    view.render(state.current(), state.revision);
    status.textContent = statusLine(state, state.lastError ? `| ${state.lastError}` : "");
    requestAnimationFrame(render);
  };
  requestAnimationFrame(render);
}

boot();
