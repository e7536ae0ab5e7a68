"""Default bench: three reagent bottles, a test tube in its stand, a dropper.

The table is the world plane y = 0; vessels stand on it, the test tube
axis is the world origin. Proxy-sphere placement is jittered by the world
seed, which is the only randomness in a run.
"""

from __future__ import annotations

import math

import numpy as np

from .chemistry import Mixture, default_registry, record_addition
from .geometry import Pose, quat_from_axis_angle, vec3
from .vessels import BOTTLE, PIPETTE_BODY, TEST_TUBE, Vessel, VesselProfile
from .world import SimConfig, World

TUBE = "tube"
BOTTLE_FESO4 = "bottle_feso4"
BOTTLE_NITRATE = "bottle_nitrate"
BOTTLE_ACID = "bottle_acid"
DROPPER = "dropper"

DEFAULT_CONTENTS = {
    BOTTLE_FESO4: ("feso4", 5.0, 60),
    BOTTLE_NITRATE: ("nitrate", 2.0, 60),
    BOTTLE_ACID: ("h2so4", 6.0, 80),
}


def tube_profile() -> VesselProfile:
    return VesselProfile(TEST_TUBE, [(0.003, 0.014), (0.13, 0.014)],
                         mouth_z=0.13, mouth_radius=0.014, wall_thickness=0.0015)


def bottle_profile() -> VesselProfile:
    return VesselProfile(BOTTLE, [(0.003, 0.022), (0.055, 0.022),
                                  (0.07, 0.012), (0.085, 0.012)],
                         mouth_z=0.085, mouth_radius=0.012, wall_thickness=0.002)


def dropper_profile() -> VesselProfile:
    return VesselProfile(PIPETTE_BODY, [(0.002, 0.006), (0.07, 0.006)],
                         mouth_z=0.07, mouth_radius=0.006, wall_thickness=0.001)


def _fill_positions(rng, profile, count, particle_radius):
    """Jittered hexagonal-ish layers inside the cavity, bottom up (local frame)."""
    a = particle_radius
    out = []
    h = profile.bottom_z + a * 1.2
    while len(out) < count:
        r_free = profile.radius_at(h) - a * 1.2
        ring_r = 0.0
        while ring_r <= r_free and len(out) < count:
            n_on_ring = 1 if ring_r == 0.0 else max(1, int(math.pi * ring_r / a))
            for j in range(n_on_ring):
                if len(out) >= count:
                    break
                ang = 2 * math.pi * j / n_on_ring + rng.uniform(0, 0.3)
                jitter = rng.uniform(-0.2 * a, 0.2 * a, size=2)
                out.append([ring_r * math.cos(ang) + jitter[0], h,
                            ring_r * math.sin(ang) + jitter[1]])
            ring_r += 2.1 * a
        h += 2.1 * a
    return np.array(out)


def build_scene(seed: int = 0, config: SimConfig | None = None,
                contents: dict | None = None) -> World:
    config = config or SimConfig()
    contents = contents if contents is not None else DEFAULT_CONTENTS
    registry = default_registry()
    world = World(config, registry, rng_seed=seed)
    rng = np.random.default_rng(seed)

    world.add_vessel(Vessel(TUBE, tube_profile(), Pose(vec3(0, 0, 0))))
    world.add_vessel(Vessel(BOTTLE_FESO4, bottle_profile(), Pose(vec3(-0.15, 0, 0))))
    world.add_vessel(Vessel(BOTTLE_NITRATE, bottle_profile(), Pose(vec3(-0.25, 0, 0))))
    world.add_vessel(Vessel(BOTTLE_ACID, bottle_profile(), Pose(vec3(0.15, 0, 0))))
    # the dropper starts tip-down, parked above the table
    flipped = quat_from_axis_angle(vec3(1, 0, 0), math.pi)
    world.attach_pipette(Vessel(DROPPER, dropper_profile(),
                                Pose(vec3(0.25, 0.12, 0), flipped)),
                         capacity=config.pipette_capacity)

    for vid in sorted(contents):
        species_id, grams, count = contents[vid]
        vessel = world.vessels[vid]
        record_addition(vessel.mixture, registry[species_id], grams, "poured", 0)
        local = _fill_positions(rng, vessel.profile, count, config.particle_radius)
        world_pos = np.array([vessel.pose.to_world(p) for p in local])
        world.add_particles(vid, species_id, world_pos, grams / count)
    return world


def settle(world: World, ticks: int = 120) -> World:
    for _ in range(ticks):
        world.step()
    return world
