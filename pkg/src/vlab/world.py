"""Fixed-timestep world: gravity, collisions, parenting, pours and the dropper.

State layout is struct-of-arrays (numpy) for speed; a step is a pure
function of the previous state plus the commands applied at the tick
boundary, with all iteration in stable id order, so two runs from the same
seed produce identical digests.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import chemistry
from .chemistry import Mixture, ReactionOutcome, SpeciesRegistry
from .geometry import (Pose, lerp_pose, quat_conj, quat_mul, quat_rotate,
                       quat_rotation_matrix, tilt_angle, vec3)
from .vessels import Vessel, VesselProfile, clamp_inside


def _to_local_many(pose: Pose, pts: np.ndarray) -> np.ndarray:
    m = quat_rotation_matrix(pose.orientation)
    return (pts - pose.position) @ m


def _to_world_many(pose: Pose, pts_local: np.ndarray) -> np.ndarray:
    m = quat_rotation_matrix(pose.orientation)
    return pts_local @ m.T + pose.position


def _rotate_many(q: np.ndarray, vs: np.ndarray) -> np.ndarray:
    return vs @ quat_rotation_matrix(q).T

POUR_IN = "pour_in"
SPILL = "spill"
PICKUP = "pickup"


class IntegrityError(RuntimeError):
    """Non-finite particle state; the world is halted, never clamped silently."""


@dataclass
class SimConfig:
    dt: float = 1.0 / 120.0
    gravity: tuple = (0.0, -9.81, 0.0)
    restitution: float = 0.1
    tangential_damping: float = 0.9
    linear_drag: float = 0.99         # per-tick velocity retention (viscosity)
    particle_radius: float = 0.0025
    spill_grace_ticks: int = 12
    pour_tilt_min_deg: float = 60.0   # 90 deg minus the rim angle
    pair_passes: int = 4
    pair_slop: float = 0.05           # acceptable residual overlap, x radius
    pipette_capacity: int = 8
    suction_radius_factor: float = 3.0
    suction_stiffness: float = 1000.0  # critically damped: c = 2 sqrt(k)
    side_entry_fraction: float = 0.5   # of mouth radius, dropper_side threshold


@dataclass(frozen=True)
class TransferEvent:
    tick: int
    particle: int
    src: Optional[str]
    dst: Optional[str]
    kind: str


@dataclass
class PipetteState:
    vessel_id: str
    capacity: int
    mouth_open: bool = True
    bulb_pressed: bool = False
    suction_active: bool = False
    suction_source: Optional[str] = None
    attractor_offset: np.ndarray = field(default_factory=lambda: vec3(0.0, 0.03, 0.0))
    release_tip: Optional[np.ndarray] = None  # tip position at last release


@dataclass
class MotionPlan:
    pos_from: np.ndarray
    pos_to: np.ndarray
    pos_t0: int = 0
    pos_ticks: int = 0
    rot_from: np.ndarray = None
    rot_to: np.ndarray = None
    rot_t0: int = 0
    rot_ticks: int = 0


@dataclass
class Particle:
    """Read-only view of one particle, for inspection and tests."""
    id: int
    position: np.ndarray
    velocity: np.ndarray
    radius: float
    species: str
    parent: Optional[str]
    ballistic: bool


class World:
    def __init__(self, config: SimConfig, registry: SpeciesRegistry, rng_seed: int = 0):
        self.config = config
        self.registry = registry
        self.rng_seed = int(rng_seed)
        self.tick = 0
        self.dt = config.dt
        self.gravity = np.array(config.gravity, dtype=float)

        self.vessels: dict[str, Vessel] = {}
        self._order: list[str] = []        # vessel ids in stable (sorted) order
        self.pipette: Optional[PipetteState] = None

        n = 0
        self.ids = np.zeros(n, dtype=np.int64)
        self.pos = np.zeros((n, 3))
        self.vel = np.zeros((n, 3))
        self.radius = np.zeros(n)
        self.species = []                   # species id per particle
        self.parent_idx = np.zeros(n, dtype=np.int32)   # index into _order, -1 none
        self.ballistic = np.zeros(n, dtype=bool)
        self.in_ledger = np.zeros(n, dtype=bool)
        self.miss_ticks = np.zeros(n, dtype=np.int32)
        self.payload = np.zeros(n)          # grams carried by each proxy sphere

        self.plans: dict[str, MotionPlan] = {}
        self.held_id: Optional[str] = None
        self.events: list[TransferEvent] = []
        self.outcome = ReactionOutcome()
        self.max_wall_penetration = 0.0
        self._dirty_mixtures: set[str] = set()

    # -- construction ------------------------------------------------------

    def add_vessel(self, vessel: Vessel) -> None:
        if vessel.id in self.vessels:
            raise ValueError(f"duplicate vessel id {vessel.id!r}")
        if vessel.mixture is None:
            vessel.mixture = Mixture()
        self.vessels[vessel.id] = vessel
        self._order = sorted(self.vessels)

    def attach_pipette(self, vessel: Vessel, capacity: int) -> None:
        self.add_vessel(vessel)
        self.pipette = PipetteState(vessel.id, capacity)

    def add_particles(self, vessel_id: Optional[str], species: str,
                      positions: np.ndarray, payload_each: float) -> np.ndarray:
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        k = len(positions)
        start = int(self.ids[-1]) + 1 if len(self.ids) else 0
        new_ids = np.arange(start, start + k, dtype=np.int64)
        self.ids = np.concatenate([self.ids, new_ids])
        self.pos = np.concatenate([self.pos, positions])
        self.vel = np.concatenate([self.vel, np.zeros((k, 3))])
        self.radius = np.concatenate([self.radius, np.full(k, self.config.particle_radius)])
        self.species.extend([species] * k)
        pidx = self._order.index(vessel_id) if vessel_id is not None else -1
        self.parent_idx = np.concatenate([self.parent_idx, np.full(k, pidx, dtype=np.int32)])
        self.ballistic = np.concatenate([self.ballistic, np.zeros(k, dtype=bool)])
        self.in_ledger = np.concatenate([self.in_ledger, np.full(k, vessel_id is not None)])
        self.miss_ticks = np.concatenate([self.miss_ticks, np.zeros(k, dtype=np.int32)])
        self.payload = np.concatenate([self.payload, np.full(k, payload_each)])
        return new_ids

    # -- lookups -----------------------------------------------------------

    def vessel_index(self, vessel_id: Optional[str]) -> int:
        return self._order.index(vessel_id) if vessel_id is not None else -1

    def vessel_id_at(self, idx: int) -> Optional[str]:
        return self._order[idx] if idx >= 0 else None

    def particles_of(self, vessel_id: str, settled_only: bool = False) -> np.ndarray:
        """Indices (not ids) of particles parented to a vessel."""
        vi = self.vessel_index(vessel_id)
        mask = self.parent_idx == vi
        if settled_only:
            mask &= ~self.ballistic
        return np.nonzero(mask)[0]

    def particle_view(self, pid: int) -> Particle:
        i = int(np.searchsorted(self.ids, pid))
        if i >= len(self.ids) or self.ids[i] != pid:
            raise KeyError(f"no particle {pid}")
        return Particle(pid, self.pos[i].copy(), self.vel[i].copy(), float(self.radius[i]),
                        self.species[i], self.vessel_id_at(int(self.parent_idx[i])),
                        bool(self.ballistic[i]))

    @property
    def spill_count(self) -> int:
        return sum(1 for e in self.events if e.kind == SPILL)

    # -- commands (applied between ticks) ----------------------------------

    def grab(self, name: str) -> None:
        if name not in self.vessels:
            raise KeyError(f"no such object {name!r}")
        if self.held_id is not None and self.held_id != name:
            self.release_hand()
        self.held_id = name
        self.vessels[name].held = True

    def release_hand(self) -> None:
        if self.held_id is not None:
            self.vessels[self.held_id].held = False
            self.plans.pop(self.held_id, None)
            self.held_id = None

    def _plan(self, name: str) -> MotionPlan:
        v = self.vessels[name]
        plan = self.plans.get(name)
        if plan is None:
            plan = MotionPlan(v.pose.position.copy(), v.pose.position.copy())
            plan.rot_from = v.pose.orientation.copy()
            plan.rot_to = v.pose.orientation.copy()
            self.plans[name] = plan
        return plan

    def command_move(self, name: str, target_xyz, over_ticks: int) -> None:
        if name not in self.vessels:
            raise KeyError(f"no such object {name!r}")
        if not self.vessels[name].held:
            raise RuntimeError(f"{name} must be grabbed before moving")
        plan = self._plan(name)
        plan.pos_from = self.vessels[name].pose.position.copy()
        plan.pos_to = np.asarray(target_xyz, dtype=float)
        plan.pos_t0 = self.tick
        plan.pos_ticks = max(1, int(over_ticks))

    def command_tilt(self, name: str, degrees: float, over_ticks: int) -> None:
        if name not in self.vessels:
            raise KeyError(f"no such object {name!r}")
        if not self.vessels[name].held:
            raise RuntimeError(f"{name} must be grabbed before tilting")
        from .geometry import quat_from_axis_angle
        plan = self._plan(name)
        plan.rot_from = self.vessels[name].pose.orientation.copy()
        plan.rot_to = quat_from_axis_angle(vec3(1, 0, 0), math.radians(degrees))
        plan.rot_t0 = self.tick
        plan.rot_ticks = max(1, int(over_ticks))

    def add_to_mixture(self, vessel_id: str, species_id: str, grams: float,
                       method: str) -> None:
        """Chemistry-ledger shortcut that bypasses physics (tagged in reports)."""
        vessel = self.vessels[vessel_id]
        chemistry.record_addition(vessel.mixture, self.registry[species_id],
                                  grams, method, self.tick)
        self._dirty_mixtures.add(vessel_id)

    # -- pipette -----------------------------------------------------------

    def pipette_contents(self) -> np.ndarray:
        return self.particles_of(self.pipette.vessel_id, settled_only=True)

    def press_bulb(self) -> None:
        pip = self.pipette
        pip.bulb_pressed = True
        pip.mouth_open = True
        pip.suction_active = False
        pip.suction_source = None
        tip = self.vessels[pip.vessel_id].mouth_center_world()
        for vid in self._order:
            if vid == pip.vessel_id:
                continue
            v = self.vessels[vid]
            local = v.pose.to_local(tip)
            rho = math.hypot(local[0], local[2])
            if float(v.profile.sdf_local(rho, local[1])) <= 0 or local[1] > v.profile.mouth_z:
                continue
            members = self.particles_of(vid, settled_only=True)
            if len(members) == 0:
                continue
            heights = np.array([v.pose.to_local(self.pos[i])[1] for i in members])
            fill = float(heights.max()) + 2 * self.config.particle_radius
            if local[1] <= fill:
                pip.suction_active = True
                pip.suction_source = vid
                break

    def release_pipette(self) -> None:
        pip = self.pipette
        pip.mouth_open = True
        pip.bulb_pressed = False
        pip.suction_active = False
        pip.suction_source = None
        pip.release_tip = self.vessels[pip.vessel_id].mouth_center_world().copy()

    # -- tick pipeline -----------------------------------------------------

    def step(self) -> None:
        cfg = self.config
        dt = self.dt
        self._advance_motion()
        # integrate (semi-implicit Euler with mild viscous drag)
        if len(self.ids):
            self.vel *= cfg.linear_drag
            self.vel += self.gravity * dt
            self.pos += self.vel * dt
        self._suction_tick()
        self._collide_vessels()
        self._separate_pairs()
        self._collide_vessels(final_pass=True)
        self._pour_flux()
        self._assign_parents()
        self._pipette_gate()
        self._react()
        self._check_finite()
        self.tick += 1

    def _advance_motion(self) -> None:
        for name in sorted(self.plans):
            plan = self.plans[name]
            v = self.vessels[name]
            old = v.pose.copy()
            pose = v.pose
            if plan.pos_ticks:
                t = min(1.0, (self.tick - plan.pos_t0 + 1) / plan.pos_ticks)
                pose = Pose(plan.pos_from + t * (plan.pos_to - plan.pos_from),
                            pose.orientation)
            if plan.rot_ticks:
                t = min(1.0, (self.tick - plan.rot_t0 + 1) / plan.rot_ticks)
                pose = Pose(pose.position,
                            lerp_pose(Pose(pose.position, plan.rot_from),
                                      Pose(pose.position, plan.rot_to), t).orientation)
            v.pose = pose
            # rigid advection: settled contents follow the vessel exactly
            members = self.particles_of(name, settled_only=True)
            if len(members) and (np.any(old.position != pose.position)
                                 or np.any(old.orientation != pose.orientation)):
                dq = quat_mul(pose.orientation, quat_conj(old.orientation))
                rel = self.pos[members] - old.position
                self.pos[members] = pose.position + _rotate_many(dq, rel)
                self.vel[members] = _rotate_many(dq, self.vel[members])

    def _vessel_point_velocity(self, name: str, points: np.ndarray) -> np.ndarray:
        plan = self.plans.get(name)
        if plan is None:
            return np.zeros_like(points)
        v = self.vessels[name]
        dt = self.dt
        lin = np.zeros(3)
        if plan.pos_ticks and self.tick - plan.pos_t0 < plan.pos_ticks:
            lin = (plan.pos_to - plan.pos_from) / (plan.pos_ticks * dt)
        omega = np.zeros(3)
        if plan.rot_ticks and self.tick - plan.rot_t0 < plan.rot_ticks:
            dq = quat_mul(plan.rot_to, quat_conj(plan.rot_from))
            angle = 2.0 * math.acos(max(-1.0, min(1.0, dq[0])))
            axis = dq[1:4]
            n = np.linalg.norm(axis)
            if n > 1e-12:
                omega = axis / n * (angle / (plan.rot_ticks * dt))
        return lin + np.cross(omega, points - v.pose.position)

    def _collide_vessels(self, final_pass: bool = False) -> None:
        cfg = self.config
        for vid in self._order:
            v = self.vessels[vid]
            members = self.particles_of(vid, settled_only=True)
            if len(members) == 0:
                continue
            mouth_closed = (self.pipette is not None and vid == self.pipette.vessel_id
                            and not self.pipette.mouth_open)
            local = _to_local_many(v.pose, self.pos[members])
            clamped, *_ = clamp_inside(v.profile, local, self.radius[members],
                                       mouth_closed=mouth_closed)
            moved = np.linalg.norm(clamped - local, axis=1) > 1e-12
            if final_pass:
                rho = np.hypot(clamped[:, 0], clamped[:, 2])
                sd = np.asarray(v.profile.sdf_local(rho, clamped[:, 1]))
                pen = float(np.maximum(0.0, -sd).max()) if sd.size else 0.0
                self.max_wall_penetration = max(self.max_wall_penetration, pen)
            if not np.any(moved):
                continue
            idx = members[moved]
            new_world = _to_world_many(v.pose, clamped[moved])
            correction = new_world - self.pos[idx]
            self.pos[idx] = new_world
            if final_pass:
                continue
            # restitution along the push direction, relative to the vessel
            n = correction / np.linalg.norm(correction, axis=1)[:, None]
            v_vessel = self._vessel_point_velocity(vid, new_world)
            rel = self.vel[idx] - v_vessel
            vn = np.sum(rel * n, axis=1)
            approaching = vn < 0
            vn_resp = np.where(approaching, -cfg.restitution * vn, vn)
            tangent = rel - vn[:, None] * n
            tangent *= cfg.tangential_damping
            self.vel[idx] = v_vessel + tangent + vn_resp[:, None] * n

        # table plane for free and ballistic spheres
        free = (self.parent_idx == -1) | self.ballistic
        if np.any(free):
            idx = np.nonzero(free)[0]
            low = self.pos[idx, 1] < self.radius[idx]
            hit = idx[low]
            if len(hit):
                self.pos[hit, 1] = self.radius[hit]
                vy = self.vel[hit, 1]
                self.vel[hit, 1] = np.where(vy < 0, -cfg.restitution * vy, vy)
                self.vel[hit, 0] *= cfg.tangential_damping
                self.vel[hit, 2] *= cfg.tangential_damping

    def _separate_pairs(self) -> None:
        n = len(self.ids)
        if n < 2:
            return
        cfg = self.config
        slop = cfg.pair_slop * float(self.radius.min())
        reach = 2.0 * float(self.radius.max())
        for _ in range(cfg.pair_passes):
            tree = cKDTree(self.pos)
            pairs = tree.query_pairs(r=reach, output_type="ndarray")
            if len(pairs) == 0:
                return
            ii, jj = pairs[:, 0], pairs[:, 1]
            diff = self.pos[jj] - self.pos[ii]
            dist = np.linalg.norm(diff, axis=1)
            rsum = self.radius[ii] + self.radius[jj]
            hit = dist < rsum
            if not np.any(hit):
                return
            ii, jj, diff, dist, rsum = ii[hit], jj[hit], diff[hit], dist[hit], rsum[hit]
            overlap = rsum - dist
            nvec = np.where(dist[:, None] > 1e-9,
                            diff / np.maximum(dist, 1e-9)[:, None],
                            np.array([0.0, 1.0, 0.0]))
            # simultaneous (Jacobi) positional projection, half overlap each
            push = 0.5 * overlap[:, None] * nvec
            corr = np.zeros_like(self.pos)
            np.add.at(corr, ii, -push)
            np.add.at(corr, jj, push)
            self.pos += corr
            if float(overlap.max()) <= slop:
                return

    def _pour_flux_ids(self, vessel_id: str) -> np.ndarray:
        """Particle indices currently exiting the vessel's mouth."""
        v = self.vessels[vessel_id]
        gate_open = True
        if self.pipette is not None and vessel_id == self.pipette.vessel_id:
            gate_open = self.pipette.mouth_open
        tilt_ok = math.degrees(tilt_angle(v.pose)) > self.config.pour_tilt_min_deg
        if not (gate_open and tilt_ok):
            return np.zeros(0, dtype=int)
        members = self.particles_of(vessel_id, settled_only=True)
        if len(members) == 0:
            return members
        heights = _to_local_many(v.pose, self.pos[members])[:, 1]
        return members[heights > v.profile.mouth_z]

    def _pour_flux(self) -> None:
        for vid in self._order:
            exiting = self._pour_flux_ids(vid)
            if len(exiting) == 0:
                continue
            v = self.vessels[vid]
            for i in exiting.tolist():
                self.ballistic[i] = True
                if self.in_ledger[i]:
                    taken = chemistry.withdraw(v.mixture, self.registry[self.species[i]],
                                               float(self.payload[i]))
                    self.payload[i] = taken
                    self.in_ledger[i] = False
                    self._dirty_mixtures.add(vid)

    def _suction_tick(self) -> None:
        pip = self.pipette
        if pip is None or not pip.suction_active or not pip.mouth_open:
            return
        cfg = self.config
        dropper = self.vessels[pip.vessel_id]
        tip = dropper.mouth_center_world()
        attractor = dropper.pose.to_world(pip.attractor_offset)
        contents = self.particles_of(pip.vessel_id, settled_only=True)

        src = pip.suction_source
        candidates = self.particles_of(src, settled_only=True)
        if len(candidates):
            d = np.linalg.norm(self.pos[candidates] - tip, axis=1)
            radius = cfg.suction_radius_factor * dropper.profile.mouth_radius
            near = candidates[d <= radius]
        else:
            near = candidates

        k = cfg.suction_stiffness
        c = 2.0 * math.sqrt(k)
        for group in (near, contents):
            if len(group) == 0:
                continue
            acc = k * (attractor - self.pos[group]) - c * self.vel[group] - self.gravity
            self.vel[group] += acc * self.dt

        # capture: source spheres that crossed into the dropper cavity
        if len(near):
            local = _to_local_many(dropper.pose, self.pos[near])
            rho = np.hypot(local[:, 0], local[:, 2])
            inside = (local[:, 1] <= dropper.profile.mouth_z) & \
                     (local[:, 1] >= dropper.profile.bottom_z) & \
                     (rho <= dropper.profile.radius_at(local[:, 1]))
            captured = near[inside]
            # never overfill: several spheres can cross the gate on one tick
            room = pip.capacity - len(self.pipette_contents())
            for i in captured.tolist()[:max(0, room)]:
                self._reparent(i, pip.vessel_id, method=chemistry.POURED)
        if len(self.pipette_contents()) >= pip.capacity:
            pip.mouth_open = False
            pip.suction_active = False
            pip.bulb_pressed = False

    def _pipette_gate(self) -> None:
        pip = self.pipette
        if pip is None:
            return
        if pip.suction_active and len(self.pipette_contents()) >= pip.capacity:
            pip.mouth_open = False
            pip.suction_active = False
            pip.bulb_pressed = False

    def _reparent(self, i: int, new_vessel: Optional[str], method: str = chemistry.POURED,
                  kind: Optional[str] = None) -> None:
        """Move one particle between owners, emitting the event and keeping
        the mixture ledgers consistent."""
        old = self.vessel_id_at(int(self.parent_idx[i]))
        if old == new_vessel:
            # settling back into its own vessel: no event, re-enter the
            # ledger only if the payload left it during a pour
            self.miss_ticks[i] = 0
            if not self.ballistic[i]:
                return
            self.ballistic[i] = False
            if (new_vessel is not None and not self.in_ledger[i]
                    and self.payload[i] > 0):
                chemistry.record_addition(self.vessels[new_vessel].mixture,
                                          self.registry[self.species[i]],
                                          float(self.payload[i]),
                                          chemistry.POURED, self.tick)
                self.in_ledger[i] = True
                self._dirty_mixtures.add(new_vessel)
            return
        was_pipette = (self.pipette is not None and old == self.pipette.vessel_id)
        if self.in_ledger[i] and old is not None:
            taken = chemistry.withdraw(self.vessels[old].mixture,
                                       self.registry[self.species[i]],
                                       float(self.payload[i]))
            self.payload[i] = taken
            self.in_ledger[i] = False
            self._dirty_mixtures.add(old)
        if old != new_vessel:
            if kind is None:
                if new_vessel is None:
                    kind = SPILL
                elif old is None:
                    kind = PICKUP
                else:
                    kind = POUR_IN
            self.events.append(TransferEvent(self.tick, int(self.ids[i]), old, new_vessel, kind))
        self.parent_idx[i] = self.vessel_index(new_vessel)
        self.ballistic[i] = False
        self.miss_ticks[i] = 0
        if new_vessel is not None and self.payload[i] > 0:
            if was_pipette and method == chemistry.POURED:
                # classify the whole release by where the tip aimed: lateral
                # offset of the release point from the receiving vessel's axis
                v = self.vessels[new_vessel]
                ref = self.pipette.release_tip
                ref = self.pos[i] if ref is None else ref
                local = v.pose.to_local(np.asarray(ref, dtype=float))
                rho = math.hypot(local[0], local[2])
                side = rho >= self.config.side_entry_fraction * v.profile.mouth_radius
                method = chemistry.DROPPER_SIDE if side else chemistry.DROPPER_TOP
            chemistry.record_addition(self.vessels[new_vessel].mixture,
                                      self.registry[self.species[i]],
                                      float(self.payload[i]), method, self.tick)
            self.in_ledger[i] = True
            self._dirty_mixtures.add(new_vessel)

    def _assign_parents(self) -> None:
        """Per-tick ownership pass: keep spheres that sit inside their vessel,
        catch ballistic ones near a mouth, spill the rest after the grace
        window."""
        n = len(self.ids)
        if n == 0:
            return
        cfg = self.config
        profiles = [(vid, self.vessels[vid]) for vid in self._order]

        # which spheres sit strictly inside which cavity
        inside = np.zeros((len(profiles), n), dtype=bool)
        for k, (vid, v) in enumerate(profiles):
            local = _to_local_many(v.pose, self.pos)
            rho = np.hypot(local[:, 0], local[:, 2])
            inside[k] = ((local[:, 1] >= v.profile.bottom_z)
                         & (local[:, 1] <= v.profile.mouth_z)
                         & (rho < v.profile.radius_at(local[:, 1])))

        # fast path: settled spheres sitting inside their own vessel
        pidx = self.parent_idx
        own_inside = np.zeros(n, dtype=bool)
        has_parent = pidx >= 0
        own_inside[has_parent] = inside[pidx[has_parent], np.nonzero(has_parent)[0]]
        settled = has_parent & ~self.ballistic & own_inside
        self.miss_ticks[settled] = 0
        todo = np.nonzero(~settled)[0]
        if len(todo) == 0:
            return

        mouth_centers = np.array([v.mouth_center_world() for _, v in profiles])
        thresholds = np.array([v.profile.mouth_radius + 2 * cfg.particle_radius
                               for _, v in profiles])
        dist_to_mouth = np.linalg.norm(
            self.pos[todo][None, :, :] - mouth_centers[:, None, :], axis=2)
        dist_col = {int(i): k for k, i in enumerate(todo)}

        for i in todo.tolist():
            pi = int(self.parent_idx[i])
            col = dist_col[i]
            # settled inside somebody's cavity: that vessel owns it
            owners = np.nonzero(inside[:, i])[0]
            if len(owners):
                # pipette interior overlaps its host vessel while dipped;
                # prefer the current parent, else the nearest mouth
                if pi in owners and not self.ballistic[i]:
                    self.miss_ticks[i] = 0
                    continue
                if pi in owners and self.ballistic[i]:
                    self._reparent(i, self._order[pi])
                    continue
                k = owners[np.argmin(dist_to_mouth[owners, col])] if len(owners) > 1 else owners[0]
                self._reparent(i, self._order[int(k)])
                continue
            # near a mouth: catchment
            within = np.nonzero(dist_to_mouth[:, col] <= thresholds)[0]
            if len(within):
                k = int(within[np.argmin(dist_to_mouth[within, col])])
                self.miss_ticks[i] = 0
                if k == pi:
                    continue  # keeps its parent; stays ballistic if it was
                self._reparent(i, self._order[k], kind=None)
                # caught at the mouth but not yet inside: keep falling freely
                self.ballistic[i] = True
                continue
            if pi < 0 and not self.ballistic[i]:
                continue
            self.miss_ticks[i] += 1
            if self.miss_ticks[i] >= cfg.spill_grace_ticks:
                self._reparent(i, None, kind=SPILL)

    def refresh_verdict(self) -> str:
        """Re-evaluate mixtures outside the tick pipeline (for asserts)."""
        self._react()
        return self.outcome.verdict

    def _react(self) -> None:
        for vid in sorted(self._dirty_mixtures):
            self.vessels[vid]._verdict = chemistry.evaluate_reaction(
                self.vessels[vid].mixture, self.registry)
        self._dirty_mixtures.clear()
        if self.outcome.verdict == chemistry.BROWN_RING:
            return  # latched
        best = chemistry.NO_REACTION
        ring_vessel = None
        for vid in self._order:
            verdict = getattr(self.vessels[vid], "_verdict", chemistry.NO_REACTION)
            if verdict == chemistry.BROWN_RING:
                best = verdict
                ring_vessel = vid
                break
            if verdict == chemistry.INTERFERENCE:
                best = verdict
        if best == chemistry.BROWN_RING:
            v = self.vessels[ring_vessel]
            members = self.particles_of(ring_vessel, settled_only=True)
            local = (_to_local_many(v.pose, self.pos[members])
                     if len(members) else np.zeros((0, 3)))
            heights = local[:, 1]
            rho = np.hypot(local[:, 0], local[:, 2])
            band = chemistry.compute_ring_band(
                self.ids[members], heights, rho,
                v.profile.radius_at(heights), 2.0 * self.config.particle_radius)
            if band is not None and band.ids:
                self.outcome = ReactionOutcome(chemistry.BROWN_RING, band, band.ids)
                product = self.registry.by_role("product")
                if product is not None:
                    ring_set = set(band.ids)
                    for j in range(len(self.ids)):
                        if int(self.ids[j]) in ring_set:
                            self.species[j] = product.id
            # else: not settled enough yet; retry next tick
            self._dirty_mixtures.add(ring_vessel)
        else:
            self.outcome = ReactionOutcome(best, None, [])

    def _check_finite(self) -> None:
        if len(self.ids) and not (np.isfinite(self.pos).all() and np.isfinite(self.vel).all()):
            bad = np.nonzero(~np.isfinite(self.pos).all(axis=1)
                             | ~np.isfinite(self.vel).all(axis=1))[0]
            raise IntegrityError(
                f"non-finite state at tick {self.tick} for particles "
                f"{self.ids[bad][:5].tolist()}")

    def _track_penetration(self) -> None:
        worst = 0.0
        for vid in self._order:
            v = self.vessels[vid]
            members = self.particles_of(vid, settled_only=True)
            if len(members) == 0:
                continue
            local = _to_local_many(v.pose, self.pos[members])
            rho = np.hypot(local[:, 0], local[:, 2])
            sd = v.profile.sdf_local(rho, local[:, 1])
            pen = np.maximum(0.0, -np.asarray(sd))
            if len(pen):
                worst = max(worst, float(pen.max()))
        self.max_wall_penetration = max(self.max_wall_penetration, worst)

    # -- digest ------------------------------------------------------------

    def canonical_state(self) -> str:
        f = lambda x: format(float(x), ".9g")
        out = [f"tick={self.tick}", f"dt={f(self.dt)}", f"seed={self.rng_seed}"]
        for i in range(len(self.ids)):
            out.append(
                "p|{}|{}|{}|{}|{}|{}|{}|{}|{}".format(
                    int(self.ids[i]),
                    ",".join(f(x) for x in self.pos[i]),
                    ",".join(f(x) for x in self.vel[i]),
                    f(self.radius[i]), self.species[i],
                    self.vessel_id_at(int(self.parent_idx[i])) or "-",
                    int(self.ballistic[i]), int(self.miss_ticks[i]),
                    f(self.payload[i])))
        for vid in self._order:
            v = self.vessels[vid]
            m = v.mixture
            amounts = ";".join(f"{sid}:{f(g)}" for sid, g in sorted(m.amounts.items()))
            log = ";".join(f"{a.tick},{a.species},{f(a.amount_g)},{a.method}"
                           for a in m.addition_log)
            out.append("v|{}|{}|{}|{}|{}|{}|{}".format(
                vid, ",".join(f(x) for x in v.pose.position),
                ",".join(f(x) for x in v.pose.orientation),
                int(v.held), amounts, f(m.total_solvent), log))
        if self.pipette is not None:
            p = self.pipette
            rt = ",".join(f(x) for x in p.release_tip) if p.release_tip is not None else "-"
            out.append(f"pip|{p.vessel_id}|{int(p.mouth_open)}|{int(p.bulb_pressed)}"
                       f"|{int(p.suction_active)}|{p.suction_source or '-'}|{rt}")
        o = self.outcome
        band = (f"{f(o.ring_band.z_lo)},{f(o.ring_band.z_hi)},"
                + ",".join(str(i) for i in o.ring_band.ids)) if o.ring_band else "-"
        out.append(f"outcome|{o.verdict}|{band}")
        return "\n".join(out)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_state().encode()).hexdigest()
