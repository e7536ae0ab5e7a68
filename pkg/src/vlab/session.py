"""Live session service: websocket intake, fixed-rate tick loop, snapshots.

One asyncio task owns the world. Connections only push validated commands
onto a queue; commands received mid-frame are applied at the next tick
boundary in (connection id, seq) order, which is what makes a recorded
session replayable bit-for-bit.
"""

from __future__ import annotations

import asyncio
import json
import math
from dataclasses import dataclass, field

from . import chemistry
from .scene import build_scene
from .world import World

PROTOCOL_VERSION = 1
TICKS_PER_FRAME = 2
SNAPSHOT_EVERY = 2  # ticks
FRAME_RATE = 60.0

COMMAND_VERBS = ("grab", "release_hand", "move", "tilt", "pipette_press",
                 "pipette_release", "add", "wait", "grab_at", "drag")


def snapshot_dict(world: World) -> dict:
    verdict = world.outcome.verdict
    band = world.outcome.ring_band
    return {
        "type": "snapshot",
        "tick": world.tick,
        "particles": [
            {
                "id": int(world.ids[i]),
                "p": [round(float(x), 6) for x in world.pos[i]],
                "species": world.species[i],
                "parent": world.vessel_id_at(int(world.parent_idx[i])),
            }
            for i in range(len(world.ids))
        ],
        "vessels": [
            {
                "id": vid,
                "position": [float(x) for x in world.vessels[vid].pose.position],
                "orientation": [float(x) for x in world.vessels[vid].pose.orientation],
                "held": world.vessels[vid].held,
            }
            for vid in sorted(world.vessels)
        ],
        "pipette": {
            "vessel": world.pipette.vessel_id,
            "mouth_open": world.pipette.mouth_open,
            "contents": len(world.pipette_contents()),
            "capacity": world.pipette.capacity,
            "suction_active": world.pipette.suction_active,
        } if world.pipette else None,
        "mixtures": {
            vid: {
                "amounts": {k: float(v) for k, v in
                            sorted(world.vessels[vid].mixture.amounts.items())},
                "solvent": float(world.vessels[vid].mixture.total_solvent),
            }
            for vid in sorted(world.vessels)
        },
        "verdict": verdict,
        "ring": {"z_lo": band.z_lo, "z_hi": band.z_hi, "ids": list(band.ids)}
        if band else None,
        "digest": world.digest(),
    }


def scene_manifest(world: World) -> dict:
    return {
        "vessels": [
            {
                "id": vid,
                "kind": world.vessels[vid].profile.kind,
                "profile": [[float(z), float(r)] for z, r
                            in world.vessels[vid].profile.profile],
                "mouth_z": world.vessels[vid].profile.mouth_z,
                "mouth_radius": world.vessels[vid].profile.mouth_radius,
            }
            for vid in sorted(world.vessels)
        ],
        "species": {
            sid: {"role": world.registry[sid].role, "color": world.registry[sid].color}
            for sid in world.registry.ids()
        },
        "particle_radius": world.config.particle_radius,
        "dt": world.dt,
    }


class CommandError(ValueError):
    pass


def apply_command(world: World, verb: dict) -> None:
    """Apply one validated client command at a tick boundary."""
    kind = verb.get("verb")
    if kind == "grab":
        world.grab(str(verb["name"]))
    elif kind == "release_hand":
        world.release_hand()
    elif kind == "move":
        world.command_move(str(verb["name"]),
                           (float(verb["x"]), float(verb["y"]), float(verb["z"])),
                           int(verb.get("over", 1)))
    elif kind == "tilt":
        deg = float(verb["degrees"])
        if not -180.0 <= deg <= 180.0:
            raise CommandError("tilt out of range")
        world.command_tilt(str(verb["name"]), deg, int(verb.get("over", 1)))
    elif kind == "pipette_press":
        world.press_bulb()
    elif kind == "pipette_release":
        world.release_pipette()
    elif kind == "add":
        world.add_to_mixture(str(verb["vessel"]), str(verb["species"]),
                             float(verb["grams"]), str(verb["method"]))
    elif kind == "wait":
        pass
    elif kind == "grab_at":
        name = pick_vessel(world, verb["origin"], verb["dir"])
        if name is None:
            raise CommandError("nothing along that ray")
        world.grab(name)
    elif kind == "drag":
        name = world.held_id
        if name is None:
            raise CommandError("nothing grabbed")
        over = int(verb.get("over", TICKS_PER_FRAME * 2))
        if "position" in verb:
            p = verb["position"]
            world.command_move(name, (float(p[0]), float(p[1]), float(p[2])), over)
        if "tilt_degrees" in verb:
            world.command_tilt(name, float(verb["tilt_degrees"]), over)
    else:
        raise CommandError(f"unknown verb {kind!r}")


def pick_vessel(world: World, origin, direction):
    """Nearest vessel within 6 cm of the pick ray."""
    import numpy as np
    o = np.array(origin, dtype=float)
    d = np.array(direction, dtype=float)
    n = np.linalg.norm(d)
    if n == 0:
        return None
    d /= n
    best, best_dist = None, 0.06
    for vid in sorted(world.vessels):
        center = world.vessels[vid].pose.position + np.array([0.0, 0.05, 0.0])
        t = float(np.dot(center - o, d))
        if t < 0:
            continue
        dist = float(np.linalg.norm(center - (o + t * d)))
        if dist < best_dist:
            best, best_dist = vid, dist
    return best


# -- record / replay -------------------------------------------------------

class LogWriter:
    def __init__(self, path, seed):
        self._fh = open(path, "w", encoding="utf-8")
        self._write({"type": "header", "version": PROTOCOL_VERSION, "seed": seed})

    def _write(self, obj):
        self._fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
        self._fh.flush()

    def command(self, tick, conn, seq, verb):
        self._write({"type": "cmd", "tick": tick, "conn": conn, "seq": seq, "verb": verb})

    def close(self, tick, digest):
        self._write({"type": "end", "tick": tick, "digest": digest})
        self._fh.close()


def read_log(path):
    header, commands, end = None, [], None
    with open(path, encoding="utf-8") as fh:
        for idx, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                kind = obj["type"]
            except (json.JSONDecodeError, KeyError) as e:
                raise ValueError(f"corrupt log entry at line {idx + 1}: {e}") from None
            if kind == "header":
                header = obj
            elif kind == "cmd":
                if not all(k in obj for k in ("tick", "conn", "seq", "verb")):
                    raise ValueError(f"corrupt log entry at line {idx + 1}: missing field")
                commands.append(obj)
            elif kind == "end":
                end = obj
            else:
                raise ValueError(f"corrupt log entry at line {idx + 1}: unknown type {kind!r}")
    if header is None:
        raise ValueError("log has no header record")
    return header, commands, end


def replay_log(path, until_tick=None) -> str:
    """Re-run a recorded session headlessly; returns the final digest."""
    header, commands, end = read_log(path)
    world = build_scene(seed=int(header.get("seed", 0)))
    target = until_tick
    if target is None:
        target = end["tick"] if end else (commands[-1]["tick"] + 1 if commands else 0)
    queue = sorted(commands, key=lambda c: (c["tick"], str(c["conn"]), c["seq"]))
    k = 0
    while world.tick < target:
        while k < len(queue) and queue[k]["tick"] == world.tick:
            try:
                apply_command(world, queue[k]["verb"])
            except (CommandError, KeyError, RuntimeError):
                pass  # the live server rejected it too
            k += 1
        world.step()
    return world.digest()


# -- server ----------------------------------------------------------------

@dataclass
class _Conn:
    id: int
    socket: object
    last_seq: int = -1


class SessionServer:
    def __init__(self, world: World, record_path=None, realtime=True):
        self.world = world
        self.realtime = realtime
        self.pending = []      # (conn id, seq, verb dict)
        self.conns: dict[int, _Conn] = {}
        self._next_conn = 0
        self.log = LogWriter(record_path, world.rng_seed) if record_path else None
        self._stop = asyncio.Event()

    def stop(self):
        self._stop.set()

    async def handler(self, socket):
        conn = _Conn(self._next_conn, socket)
        self._next_conn += 1
        hello_done = False
        try:
            async for raw in socket:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await self._send(conn, {"type": "error", "code": "bad_json"})
                    continue
                mtype = msg.get("type")
                if not hello_done:
                    if mtype != "hello" or msg.get("version") != PROTOCOL_VERSION:
                        await self._send(conn, {"type": "error",
                                                "code": "version_mismatch",
                                                "expect": PROTOCOL_VERSION})
                        await socket.close()
                        return
                    hello_done = True
                    self.conns[conn.id] = conn
                    await self._send(conn, {"type": "hello",
                                            "version": PROTOCOL_VERSION,
                                            "conn": conn.id,
                                            "scene": scene_manifest(self.world)})
                    continue
                if mtype == "cmd":
                    seq = msg.get("seq")
                    verb = msg.get("verb")
                    if not isinstance(seq, int) or seq <= conn.last_seq:
                        await self._send(conn, {"type": "error", "code": "bad_seq",
                                                "seq": seq})
                        continue
                    if not isinstance(verb, dict) or verb.get("verb") not in COMMAND_VERBS:
                        await self._send(conn, {"type": "error", "code": "bad_command",
                                                "seq": seq})
                        continue
                    conn.last_seq = seq
                    self.pending.append((conn.id, seq, verb))
                else:
                    await self._send(conn, {"type": "error", "code": "bad_type"})
        finally:
            self.conns.pop(conn.id, None)

    async def _send(self, conn, obj):
        try:
            await conn.socket.send(json.dumps(obj))
        except Exception:
            self.conns.pop(conn.id, None)

    def _apply_pending(self):
        batch = sorted(self.pending, key=lambda t: (t[0], t[1]))
        self.pending = []
        for conn_id, seq, verb in batch:
            if self.log:
                self.log.command(self.world.tick, conn_id, seq, verb)
            try:
                apply_command(self.world, verb)
            except (CommandError, KeyError, RuntimeError) as e:
                conn = self.conns.get(conn_id)
                if conn is not None:
                    asyncio.ensure_future(self._send(conn, {
                        "type": "error", "code": "rejected", "seq": seq,
                        "detail": str(e)}))

    async def tick_loop(self):
        frame = 1.0 / FRAME_RATE
        loop = asyncio.get_event_loop()
        next_at = loop.time()
        try:
            while not self._stop.is_set():
                self._apply_pending()
                for _ in range(TICKS_PER_FRAME):
                    self.world.step()
                if self.world.tick % SNAPSHOT_EVERY == 0 and self.conns:
                    snap = json.dumps(snapshot_dict(self.world))
                    for conn in list(self.conns.values()):
                        try:
                            await conn.socket.send(snap)
                        except Exception:
                            self.conns.pop(conn.id, None)
                if self.realtime:
                    next_at += frame
                    delay = next_at - loop.time()
                    if delay > 0:
                        await asyncio.sleep(delay)
                    else:
                        next_at = loop.time()
                else:
                    await asyncio.sleep(0)
        finally:
            if self.log:
                self.log.close(self.world.tick, self.world.digest())
                self.log = None


async def serve_async(world: World, port: int, record_path=None, realtime=True,
                      ready: asyncio.Event | None = None):
    import websockets

    server = SessionServer(world, record_path=record_path, realtime=realtime)
    async with websockets.serve(server.handler, "127.0.0.1", port):
        if ready is not None:
            ready.set()
        task = asyncio.create_task(server.tick_loop())
        try:
            await task
        finally:
            server.stop()
            if not task.done():
                await task
    return server


def serve_forever(port: int, seed: int = 0, record_path=None):
    world = build_scene(seed=seed)
    asyncio.run(serve_async(world, port, record_path=record_path))
