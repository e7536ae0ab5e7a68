/**
 * Client-side mirror of the simulation state.
 *
 * Holds the scene manifest plus a short buffer of server snapshots and
 * produces smooth per-frame views by interpolating between the last two.
 * Strictly server-authoritative: nothing here integrates physics, and the
 * view never runs ahead of the newest snapshot by more than one snapshot
 * interval.
 */

import type { SceneManifest, Snapshot, Vec3 } from "./protocol.js";

export interface ParticleView {
  id: number;
  p: Vec3;
  species: string;
}

export interface VesselView {
  id: string;
  position: Vec3;
  orientation: [number, number, number, number];
  held: boolean;
}

export interface FrameView {
  tick: number;
  particles: ParticleView[];
  vessels: VesselView[];
  verdict: string;
  ring: { z_lo: number; z_hi: number; ids: number[] } | null;
  pipette: Snapshot["pipette"];
}

function lerp(a: number, b: number, t: number): number {
  return a + t * (b - a);
}

function lerpVec(a: Vec3, b: Vec3, t: number): Vec3 {
  return [lerp(a[0], b[0], t), lerp(a[1], b[1], t), lerp(a[2], b[2], t)];
}

/** Normalized linear quaternion blend; fine for the small per-snapshot steps. */
function nlerpQuat(
  a: [number, number, number, number],
  b: [number, number, number, number],
  t: number,
): [number, number, number, number] {
  const dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  const s = dot < 0 ? -1 : 1;
  const q: [number, number, number, number] = [
    lerp(a[0], s * b[0], t),
    lerp(a[1], s * b[1], t),
    lerp(a[2], s * b[2], t),
    lerp(a[3], s * b[3], t),
  ];
  const n = Math.hypot(q[0], q[1], q[2], q[3]) || 1;
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export class SceneModel {
  manifest: SceneManifest | null = null;
  private prev: Snapshot | null = null;
  private latest: Snapshot | null = null;
  /** Wall-clock ms at which `latest` arrived (receiveSnapshot's `nowMs`). */
  private latestAtMs = 0;
  private intervalMs = 1000 / 30; // refined from observed tick spacing

  setManifest(m: SceneManifest): void {
    this.manifest = m;
  }

  /** Forget snapshot history, e.g. across a reconnect. The manifest stays. */
  resetStream(): void {
    this.prev = null;
    this.latest = null;
  }

  receiveSnapshot(snap: Snapshot, nowMs: number): void {
    if (this.latest) {
      if (snap.tick <= this.latest.tick) return; // stale or duplicate frame
      const dtick = snap.tick - this.latest.tick;
      if (this.manifest) {
        this.intervalMs = dtick * this.manifest.dt * 1000;
      }
    }
    this.prev = this.latest;
    this.latest = snap;
    this.latestAtMs = nowMs;
  }

  get lastTick(): number {
    return this.latest ? this.latest.tick : -1;
  }

  get verdict(): string {
    return this.latest ? this.latest.verdict : "no_reaction";
  }

  /**
   * The frame to draw at wall-clock `nowMs`.
   *
   * Renders the span [prev, latest]; once `latest` has been on screen for a
   * full snapshot interval the view simply holds there (no extrapolation).
   */
  frameAt(nowMs: number): FrameView | null {
    const cur = this.latest;
    if (!cur) return null;
    const prev = this.prev;
    if (!prev) return this.still(cur);

    const t = Math.min(1, Math.max(0, (nowMs - this.latestAtMs) / this.intervalMs + 0));
    if (t >= 1) return this.still(cur);

    const prevById = new Map(prev.particles.map((p) => [p.id, p]));
    const particles: ParticleView[] = cur.particles.map((p) => {
      const old = prevById.get(p.id);
      return {
        id: p.id,
        p: old ? lerpVec(old.p, p.p, t) : p.p,
        species: p.species,
      };
    });
    const prevVessel = new Map(prev.vessels.map((v) => [v.id, v]));
    const vessels: VesselView[] = cur.vessels.map((v) => {
      const old = prevVessel.get(v.id);
      if (!old) return v;
      return {
        id: v.id,
        position: lerpVec(old.position, v.position, t),
        orientation: nlerpQuat(old.orientation, v.orientation, t),
        held: v.held,
      };
    });
    return {
      tick: cur.tick,
      particles,
      vessels,
      verdict: cur.verdict,
      ring: cur.ring,
      pipette: cur.pipette,
    };
  }

  private still(snap: Snapshot): FrameView {
    return {
      tick: snap.tick,
      particles: snap.particles.map((p) => ({ id: p.id, p: p.p, species: p.species })),
      vessels: snap.vessels.map((v) => ({ ...v })),
      verdict: snap.verdict,
      ring: snap.ring,
      pipette: snap.pipette,
    };
  }
}
