"""Analytic containers: surfaces of revolution with signed-distance queries.

A vessel cavity is described by a monotone (height, inner radius) profile in
the vessel's local frame, local up = +Y, height measured from the outer base
at 0. Everything above the topmost profile height (the mouth) is open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose

TEST_TUBE = "test_tube"
BOTTLE = "bottle"
PIPETTE_BODY = "pipette_body"


@dataclass
class VesselProfile:
    kind: str
    profile: list  # [(height, inner_radius), ...] height strictly increasing
    mouth_z: float
    mouth_radius: float
    wall_thickness: float

    def __post_init__(self):
        if self.kind not in (TEST_TUBE, BOTTLE, PIPETTE_BODY):
            raise ValueError(f"unknown vessel kind {self.kind!r}")
        if len(self.profile) < 2:
            raise ValueError("profile needs at least two (height, radius) pairs")
        zs = [z for z, _ in self.profile]
        rs = [r for _, r in self.profile]
        if any(b <= a for a, b in zip(zs, zs[1:])):
            raise ValueError("profile heights must be strictly increasing")
        if any(r <= 0 for r in rs):
            raise ValueError("profile radii must be positive")
        if abs(self.mouth_z - zs[-1]) > 1e-12:
            raise ValueError("mouth_z must equal the topmost profile height")
        if self.wall_thickness <= 0:
            raise ValueError("wall_thickness must be positive")
        self._zs = np.array(zs)
        self._rs = np.array(rs)
        # boundary polyline in the (radius, height) half-plane: bottom disk
        # segment then the wall going up. The mouth disk is NOT a wall.
        pts = [(0.0, zs[0])] + list(zip(rs, zs))
        self._segs = np.array([(pts[i][0], pts[i][1], pts[i + 1][0], pts[i + 1][1])
                               for i in range(len(pts) - 1)])

    @property
    def bottom_z(self) -> float:
        return float(self._zs[0])

    def radius_at(self, h):
        """Inner radius at height h (clamped to the profile's span)."""
        return np.interp(h, self._zs, self._rs)

    def sdf_local(self, rho, h):
        """Signed distance in the local (radius, height) half-plane.

        Positive inside the cavity free space, 0 on the wall, negative in
        wall material / outside. Above the mouth only the lateral rim
        matters (the opening is free space).
        """
        rho = np.asarray(rho, dtype=float)
        h = np.asarray(h, dtype=float)
        px = rho[..., None]
        py = h[..., None]
        ax, ay, bx, by = self._segs.T
        abx, aby = bx - ax, by - ay
        denom = abx * abx + aby * aby
        t = np.clip(((px - ax) * abx + (py - ay) * aby) / denom, 0.0, 1.0)
        dx = px - (ax + t * abx)
        dy = py - (ay + t * aby)
        d = np.sqrt(np.min(dx * dx + dy * dy, axis=-1))
        inside = (h >= self.bottom_z) & (h <= self.mouth_z) & (rho <= self.radius_at(h))
        sd = np.where(inside, d, -d)
        above = h > self.mouth_z
        return np.where(above, self.mouth_radius - rho, sd)


def sdf_vessel(profile: VesselProfile, pose: Pose, p: np.ndarray) -> float:
    """Signed distance from world point p to the vessel's cavity wall."""
    q = pose.to_local(np.asarray(p, dtype=float))
    rho = math.hypot(q[0], q[2])
    return float(profile.sdf_local(rho, q[1]))


def clamp_inside(profile: VesselProfile, local_pos: np.ndarray, radii: np.ndarray,
                 mouth_closed: bool = False):
    """Project sphere centres into the cavity (local frame, vectorized).

    Spheres above the open mouth are left alone; with the mouth closed the
    gate plane also caps them from below. Returns (positions, bottom_mask,
    wall_mask, top_mask); masks mark which constraint actually moved a
    sphere, for the velocity response.
    """
    p = np.array(local_pos, dtype=float)
    x, h, z = p[:, 0].copy(), p[:, 1].copy(), p[:, 2].copy()
    inside = h <= profile.mouth_z if not mouth_closed else np.ones_like(h, dtype=bool)

    top = np.zeros_like(inside)
    if mouth_closed:
        lid = profile.mouth_z - radii
        top = h > lid
        h = np.where(top, lid, h)
        inside = np.ones_like(inside)

    floor = profile.bottom_z + radii
    bottom = inside & (h < floor)
    h = np.where(bottom, floor, h)

    rho = np.hypot(x, z)
    rmax = np.maximum(profile.radius_at(h) - radii, 1e-6)
    wall = inside & (rho > rmax)
    scale = np.where(wall & (rho > 0), rmax / np.maximum(rho, 1e-12), 1.0)
    x = x * scale
    z = z * scale

    out = np.stack([x, h, z], axis=1)
    return out, bottom, wall, top


@dataclass
class Vessel:
    id: str
    profile: VesselProfile
    pose: Pose
    held: bool = False
    mixture: Optional[object] = None  # chemistry.Mixture, attached by the scene

    def mouth_center_world(self) -> np.ndarray:
        return self.pose.to_world(np.array([0.0, self.profile.mouth_z, 0.0]))

    def copy_shallow(self) -> "Vessel":
        return Vessel(self.id, self.profile, self.pose.copy(), self.held, self.mixture)
