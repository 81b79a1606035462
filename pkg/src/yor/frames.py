"""Rigid-transform algebra shared by every other module.

Conventions: the ground plane is X-Z with +Y up. A planar heading psi is a
rotation about +Y with psi=0 facing +Z and psi=pi/2 facing +X. Quaternions
are stored scalar-first [w, x, y, z]; the bus wire format is vector-first,
scalar-last (see pose3_to_wire).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]; the tie at -pi maps to +pi."""
    r = math.remainder(angle, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass
class Twist2:
    """Planar chassis velocity [vx, vy, omega].

    vx is along the body forward axis, vy along the body lateral axis,
    omega counter-clockwise in the (forward, lateral) plane.
    """

    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0

    def norm_xy(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass
class Pose2:
    """Planar pose (x, z, yaw) in the world X-Z plane, yaw in (-pi, pi]."""

    x: float = 0.0
    z: float = 0.0
    yaw: float = 0.0

    def normalized(self) -> "Pose2":
        return Pose2(self.x, self.z, normalize_angle(self.yaw))

    def distance_to(self, other: "Pose2") -> float:
        return math.hypot(self.x - other.x, self.z - other.z)


def body_to_world(yaw: float, vx: float, vy: float) -> tuple[float, float]:
    """Rotate a body-frame planar vector (forward, lateral) into world (x, z)."""
    s, c = math.sin(yaw), math.cos(yaw)
    return vx * s + vy * c, vx * c - vy * s


def world_to_body(yaw: float, wx: float, wz: float) -> tuple[float, float]:
    """Rotate a world (x, z) vector into body (forward, lateral) components."""
    s, c = math.sin(yaw), math.cos(yaw)
    return wx * s + wz * c, wx * c - wz * s


def integrate_pose2(pose: Pose2, twist: Twist2, dt: float) -> Pose2:
    """Advance a planar pose by a body twist over dt (explicit Euler)."""
    dx, dz = body_to_world(pose.yaw, twist.vx, twist.vy)
    return Pose2(
        pose.x + dx * dt,
        pose.z + dz * dt,
        normalize_angle(pose.yaw + twist.omega * dt),
    )


# --- quaternions, scalar-first [w, x, y, z] ---------------------------------


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    # v' = v + 2 w (u x v) + 2 u x (u x v)
    uv = np.cross(u, v)
    return v + 2.0 * w * uv + 2.0 * np.cross(u, uv)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_about_y(angle: float) -> np.ndarray:
    h = 0.5 * angle
    return np.array([math.cos(h), 0.0, math.sin(h), 0.0])


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(np.array(q))


def quat_angle_to(a: np.ndarray, b: np.ndarray) -> float:
    """Rotation angle between two unit quaternions, in [0, pi]."""
    d = min(1.0, abs(float(np.dot(a, b))))
    return 2.0 * math.acos(d)


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Spherical linear interpolation along the shortest arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot > 1.0 - 1e-12:
        # nearly parallel: linear blend avoids a 0/0 in the sine ratio
        return quat_normalize(q0 + t * (q1 - q0))
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    return quat_normalize(
        (math.sin((1.0 - t) * theta) / s) * q0 + (math.sin(t * theta) / s) * q1
    )


@dataclass
class Pose3:
    """Rigid transform: unit quaternion (scalar-first) plus translation in meters."""

    q: np.ndarray
    t: np.ndarray

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(quat_identity(), np.zeros(3))

    @staticmethod
    def from_yaw_xz(x: float, z: float, yaw: float, y: float = 0.0) -> "Pose3":
        """Embed a planar pose as a rotation about +Y at height y."""
        return Pose3(quat_about_y(yaw), np.array([x, y, z]))

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose3":
        return Pose3(quat_identity(), np.array([x, y, z]))

    def compose(self, other: "Pose3") -> "Pose3":
        """Return self * other (other applied first on points)."""
        return Pose3(
            quat_normalize(quat_mul(self.q, other.q)),
            self.t + quat_rotate(self.q, other.t),
        )

    def inverse(self) -> "Pose3":
        qi = quat_conj(self.q)
        return Pose3(qi, -quat_rotate(qi, self.t))

    def transform(self, point: np.ndarray) -> np.ndarray:
        return quat_rotate(self.q, point) + self.t

    def copy(self) -> "Pose3":
        return Pose3(self.q.copy(), self.t.copy())


def compose(a: Pose3, b: Pose3) -> Pose3:
    return a.compose(b)


def inverse(p: Pose3) -> Pose3:
    return p.inverse()


def smooth_step_alpha(dt: float, tau: float) -> float:
    """Blending coefficient 1 - exp(-dt/tau) of the exponential smoother."""
    return 1.0 - math.exp(-dt / tau)


# --- wire format ------------------------------------------------------------
# The pose stream serializes vector-first, scalar-last: [qx, qy, qz, qw, x, y, z].


def pose3_to_wire(p: Pose3) -> list[float]:
    w, x, y, z = p.q
    return [float(x), float(y), float(z), float(w), float(p.t[0]), float(p.t[1]), float(p.t[2])]


def pose3_from_wire(values) -> Pose3:
    if len(values) != 7:
        raise ValueError("pose wire format has 7 elements")
    qx, qy, qz, qw, x, y, z = (float(v) for v in values)
    return Pose3(np.array([qw, qx, qy, qz]), np.array([x, y, z]))
