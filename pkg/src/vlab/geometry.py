"""Vectors, poses and quaternion helpers used throughout the bench.

Positions are metres, world up is +Y (gravity points along -Y).
Vectors are plain numpy arrays of shape (3,); quaternions are arrays
(w, x, y, z) and are kept unit-norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UP = np.array([0.0, 1.0, 0.0])

QUAT_NORM_TOL = 1e-9


def vec3(x=0.0, y=0.0, z=0.0) -> np.ndarray:
    return np.array([float(x), float(y), float(z)])


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    axis = axis / n
    half = 0.5 * angle
    s = math.sin(half)
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by unit quaternion q."""
    w, x, y, z = q
    u = np.array([x, y, z])
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_rotation_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 0.9995:
        return quat_normalize(a + t * (b - a))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return (math.sin((1.0 - t) * theta) / s) * a + (math.sin(t * theta) / s) * b


@dataclass
class Pose:
    """Rigid placement: position in metres plus a unit orientation quaternion."""

    position: np.ndarray = field(default_factory=vec3)
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        n = np.linalg.norm(self.orientation)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"orientation quaternion norm {n} not ~1")
        self.orientation = self.orientation / n

    def to_world(self, p_local: np.ndarray) -> np.ndarray:
        return self.position + quat_rotate(self.orientation, p_local)

    def to_local(self, p_world: np.ndarray) -> np.ndarray:
        return quat_rotate(quat_conj(self.orientation), p_world - self.position)

    def rotate_to_world(self, v_local: np.ndarray) -> np.ndarray:
        return quat_rotate(self.orientation, v_local)

    def rotate_to_local(self, v_world: np.ndarray) -> np.ndarray:
        return quat_rotate(quat_conj(self.orientation), v_world)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())


def lerp_pose(a: Pose, b: Pose, t: float) -> Pose:
    return Pose(
        a.position + t * (b.position - a.position),
        quat_normalize(quat_slerp(a.orientation, b.orientation, t)),
    )


def tilt_angle(pose: Pose) -> float:
    """Angle in [0, pi] between the vessel's local up axis and world up."""
    # world-Y component of the rotated local up axis, straight from the
    # rotation matrix: R[1][1] = 1 - 2(x^2 + z^2)
    w, x, y, z = pose.orientation
    c = 1.0 - 2.0 * (x * x + z * z)
    return math.acos(max(-1.0, min(1.0, c)))
