/** Entry point: wire the session client, renderer and inputs together. */

import { InputController } from "./input.js";
import { SessionClient } from "./net.js";
import { BenchRenderer } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function start(): void {
  const canvas = el<HTMLCanvasElement>("bench");
  const banner = el<HTMLDivElement>("banner");
  const verdictBox = el<HTMLDivElement>("verdict");
  const dropperBox = el<HTMLDivElement>("dropper");

  const params = new URLSearchParams(location.search);
  const url =
    params.get("server") ?? `ws://${location.hostname || "127.0.0.1"}:8787`;

  const renderer = new BenchRenderer(canvas);
  let sceneBuilt = false;

  const client = new SessionClient(url, {
    onState: (state, detail) => {
      banner.textContent =
        state === "connected" ? "" : `${state}${detail ? ` — ${detail}` : ""}`;
      banner.style.display = state === "connected" ? "none" : "block";
      if (state !== "connected") sceneBuilt = false;
    },
  });

  new InputController(canvas, renderer.camera, client.commands);

  function frame(): void {
    client.commands.tick();
    const manifest = client.model.manifest;
    if (manifest && !sceneBuilt) {
      renderer.buildScene(manifest);
      sceneBuilt = true;
    }
    const view = client.model.frameAt(performance.now());
    if (manifest && view) {
      renderer.draw(view, manifest.particle_radius);
      verdictBox.textContent = `verdict: ${view.verdict}`;
      verdictBox.className = view.verdict;
      if (view.pipette) {
        const state = view.pipette.mouth_open ? "open" : "closed";
        dropperBox.textContent =
          `dropper ${view.pipette.contents}/${view.pipette.capacity} (${state})`;
      }
    }
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  start();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
