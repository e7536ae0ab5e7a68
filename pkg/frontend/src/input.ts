/**
 * Pointer and keyboard gestures -> command stream.
 *
 * Drag moves the grabbed vessel in a camera-facing plane, the wheel (or
 * Q/E) tilts it, and dedicated keys work the dropper bulb. All authority
 * stays server-side: gestures only emit commands.
 */

import * as THREE from "three";
import type { CommandStream } from "./commands.js";
import type { Vec3 } from "./protocol.js";

export interface InputOptions {
  /** Height of the drag plane while carrying a vessel. */
  carryHeight?: number;
}

export class InputController {
  private dragging = false;
  private tiltDeg = 0;
  private ray = new THREE.Raycaster();
  private pointer = new THREE.Vector2();

  constructor(
    private canvas: HTMLCanvasElement,
    private camera: THREE.Camera,
    private commands: CommandStream,
    private opts: InputOptions = {},
  ) {
    canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    canvas.addEventListener("pointermove", (e) => this.onMove(e));
    canvas.addEventListener("pointerup", () => this.onUp());
    canvas.addEventListener("wheel", (e) => this.onWheel(e), { passive: false });
    window.addEventListener("keydown", (e) => this.onKey(e));
  }

  private updatePointer(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    this.pointer.x = ((e.clientX - rect.left) / rect.width) * 2 - 1;
    this.pointer.y = -(((e.clientY - rect.top) / rect.height) * 2 - 1);
  }

  private onDown(e: PointerEvent): void {
    this.updatePointer(e);
    this.ray.setFromCamera(this.pointer, this.camera);
    const o = this.ray.ray.origin;
    const d = this.ray.ray.direction;
    const origin: Vec3 = [o.x, o.y, o.z];
    const dir: Vec3 = [d.x, d.y, d.z];
    if (this.commands.issue({ verb: "grab_at", origin, dir })) {
      this.dragging = true;
      this.tiltDeg = 0;
      this.canvas.setPointerCapture(e.pointerId);
    }
  }

  private onMove(e: PointerEvent): void {
    if (!this.dragging) return;
    this.updatePointer(e);
    this.ray.setFromCamera(this.pointer, this.camera);
    const y = this.opts.carryHeight ?? 0.18;
    const plane = new THREE.Plane(new THREE.Vector3(0, 1, 0), -y);
    const hit = new THREE.Vector3();
    if (!this.ray.ray.intersectPlane(plane, hit)) return;
    this.commands.issueContinuous({
      verb: "drag",
      position: [hit.x, y, hit.z],
      over: 8,
    });
  }

  private onUp(): void {
    if (!this.dragging) return;
    this.dragging = false;
    this.commands.issue({ verb: "release_hand" });
  }

  private onWheel(e: WheelEvent): void {
    if (!this.dragging) return;
    e.preventDefault();
    this.tiltDeg = Math.max(-180, Math.min(180, this.tiltDeg + (e.deltaY > 0 ? 5 : -5)));
    this.commands.issueContinuous({
      verb: "drag",
      tilt_degrees: this.tiltDeg,
      over: 8,
    });
  }

  private onKey(e: KeyboardEvent): void {
    switch (e.key) {
      case "q":
      case "e": {
        if (!this.dragging) return;
        this.tiltDeg = Math.max(
          -180,
          Math.min(180, this.tiltDeg + (e.key === "e" ? 5 : -5)),
        );
        this.commands.issueContinuous({
          verb: "drag",
          tilt_degrees: this.tiltDeg,
          over: 8,
        });
        return;
      }
      case " ":
        e.preventDefault();
        this.commands.issue({ verb: "pipette_press" });
        return;
      case "r":
        this.commands.issue({ verb: "pipette_release" });
        return;
    }
  }
}
