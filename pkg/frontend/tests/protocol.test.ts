import { describe, expect, it } from "vitest";

import {
  PROTOCOL_VERSION,
  ProtocolError,
  decodeServerMessage,
  encodeCommand,
  encodeHello,
} from "../src/protocol.js";

const SNAPSHOT = JSON.stringify({
  type: "snapshot",
  tick: 42,
  particles: [{ id: 0, p: [0, 0.01, 0], species: "feso4", parent: "tube" }],
  vessels: [
    { id: "tube", position: [0, 0, 0], orientation: [1, 0, 0, 0], held: false },
  ],
  pipette: { vessel: "dropper", mouth_open: true, contents: 0, capacity: 8, suction_active: false },
  mixtures: { tube: { amounts: { feso4: 1 }, solvent: 1 } },
  verdict: "no_reaction",
  ring: null,
  digest: "ab".repeat(32),
});

describe("decodeServerMessage", () => {
  it("accepts a well-formed snapshot", () => {
    const msg = decodeServerMessage(SNAPSHOT);
    expect(msg.type).toBe("snapshot");
    if (msg.type === "snapshot") {
      expect(msg.tick).toBe(42);
      expect(msg.particles[0]?.species).toBe("feso4");
    }
  });

  it("accepts hello with a scene manifest", () => {
    const msg = decodeServerMessage(
      JSON.stringify({
        type: "hello",
        version: 1,
        conn: 3,
        scene: {
          vessels: [{ id: "tube", kind: "test_tube", profile: [[0.003, 0.014]], mouth_z: 0.13, mouth_radius: 0.014 }],
          species: {},
          particle_radius: 0.0025,
          dt: 1 / 120,
        },
      }),
    );
    expect(msg.type).toBe("hello");
    if (msg.type === "hello") expect(msg.conn).toBe(3);
  });

  it("passes error frames through", () => {
    const msg = decodeServerMessage(JSON.stringify({ type: "error", code: "bad_seq" }));
    expect(msg).toMatchObject({ type: "error", code: "bad_seq" });
  });

  it.each([
    "not json",
    "[1,2,3]",
    JSON.stringify({ type: "mystery" }),
    JSON.stringify({ type: "hello", version: 1 }),
    JSON.stringify({ type: "snapshot" }),
    JSON.stringify({ type: "snapshot", tick: 1, particles: [{ id: "x" }], vessels: [], digest: "d" }),
    JSON.stringify({ type: "error" }),
  ])("rejects malformed frame %#", (raw) => {
    expect(() => decodeServerMessage(raw)).toThrow(ProtocolError);
  });
});

describe("encoders", () => {
  it("hello carries the protocol version", () => {
    expect(JSON.parse(encodeHello())).toEqual({ type: "hello", version: PROTOCOL_VERSION });
  });

  it("commands round-trip through JSON", () => {
    const frame = encodeCommand(7, { verb: "tilt", name: "tube", degrees: 45, over: 8 });
    expect(JSON.parse(frame)).toEqual({
      type: "cmd",
      seq: 7,
      verb: { verb: "tilt", name: "tube", degrees: 45, over: 8 },
    });
  });

  it("rejects invalid seq numbers", () => {
    expect(() => encodeCommand(-1, { verb: "wait" })).toThrow(ProtocolError);
    expect(() => encodeCommand(1.5, { verb: "wait" })).toThrow(ProtocolError);
  });
});
