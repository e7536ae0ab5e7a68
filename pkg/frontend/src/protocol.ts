/**
 * Wire protocol spoken with the session server.
 *
 * The UI is not an authority on anything: every fact it displays comes out
 * of these messages. Decoding is strict so a protocol drift shows up as a
 * loud error instead of silent garbage on screen.
 */

export const PROTOCOL_VERSION = 1;

export type Vec3 = [number, number, number];

export interface HelloMsg {
  type: "hello";
  version: number;
  conn: number;
  scene: SceneManifest;
}

export interface SceneManifest {
  vessels: VesselSpec[];
  species: Record<string, { role: string; color: string }>;
  particle_radius: number;
  dt: number;
}

export interface VesselSpec {
  id: string;
  kind: string;
  /** (height, inner radius) pairs along the vessel's local up axis. */
  profile: [number, number][];
  mouth_z: number;
  mouth_radius: number;
}

export interface Snapshot {
  type: "snapshot";
  tick: number;
  particles: { id: number; p: Vec3; species: string; parent: string | null }[];
  vessels: { id: string; position: Vec3; orientation: [number, number, number, number]; held: boolean }[];
  pipette: {
    vessel: string;
    mouth_open: boolean;
    contents: number;
    capacity: number;
    suction_active: boolean;
  } | null;
  mixtures: Record<string, { amounts: Record<string, number>; solvent: number }>;
  verdict: string;
  ring: { z_lo: number; z_hi: number; ids: number[] } | null;
  digest: string;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  seq?: number;
  detail?: string;
}

export type ServerMsg = HelloMsg | Snapshot | ErrorMsg;

export type CommandVerb =
  | { verb: "grab"; name: string }
  | { verb: "grab_at"; origin: Vec3; dir: Vec3 }
  | { verb: "release_hand" }
  | { verb: "move"; name: string; x: number; y: number; z: number; over?: number }
  | { verb: "tilt"; name: string; degrees: number; over?: number }
  | { verb: "drag"; position?: Vec3; tilt_degrees?: number; over?: number }
  | { verb: "pipette_press" }
  | { verb: "pipette_release" }
  | { verb: "wait" };

export interface CommandMsg {
  type: "cmd";
  seq: number;
  verb: CommandVerb;
}

export class ProtocolError extends Error {}

function isVec3(x: unknown): x is Vec3 {
  return Array.isArray(x) && x.length === 3 && x.every((v) => typeof v === "number");
}

function fail(what: string): never {
  throw new ProtocolError(`malformed server message: ${what}`);
}

/** Decode one raw frame from the server, validating the envelope. */
export function decodeServerMessage(raw: string): ServerMsg {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    fail("not JSON");
  }
  if (typeof data !== "object" || data === null) fail("not an object");
  const msg = data as Record<string, unknown>;
  switch (msg.type) {
    case "hello": {
      if (typeof msg.version !== "number") fail("hello without version");
      if (typeof msg.conn !== "number") fail("hello without conn id");
      const scene = msg.scene as SceneManifest | undefined;
      if (!scene || !Array.isArray(scene.vessels)) fail("hello without scene");
      for (const v of scene.vessels) {
        if (typeof v.id !== "string" || !Array.isArray(v.profile)) {
          fail("bad vessel spec");
        }
      }
      return msg as unknown as HelloMsg;
    }
    case "snapshot": {
      if (typeof msg.tick !== "number") fail("snapshot without tick");
      if (!Array.isArray(msg.particles)) fail("snapshot without particles");
      for (const p of msg.particles as Record<string, unknown>[]) {
        if (typeof p.id !== "number" || !isVec3(p.p) || typeof p.species !== "string") {
          fail("bad particle record");
        }
      }
      if (!Array.isArray(msg.vessels)) fail("snapshot without vessels");
      if (typeof msg.digest !== "string") fail("snapshot without digest");
      return msg as unknown as Snapshot;
    }
    case "error": {
      if (typeof msg.code !== "string") fail("error without code");
      return msg as unknown as ErrorMsg;
    }
    default:
      fail(`unknown type ${String(msg.type)}`);
  }
}

export function encodeHello(): string {
  return JSON.stringify({ type: "hello", version: PROTOCOL_VERSION });
}

export function encodeCommand(seq: number, verb: CommandVerb): string {
  if (!Number.isInteger(seq) || seq < 0) {
    throw new ProtocolError(`bad command seq ${seq}`);
  }
  const msg: CommandMsg = { type: "cmd", seq, verb };
  return JSON.stringify(msg);
}
