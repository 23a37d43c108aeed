"""Shared 3D geometry helpers: angles, quaternions and rigid poses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    w = (theta + math.pi) % TWO_PI - math.pi
    if w == -math.pi:
        return math.pi
    return w


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


def angle_between(a, b) -> float:
    """Unsigned angle between two vectors, in [0, pi]."""
    d = float(np.dot(unit(a), unit(b)))
    return math.acos(min(1.0, max(-1.0, d)))


def axis_angle_between(a, b) -> float:
    """Angle between two axes, ignoring sign, in [0, pi/2]."""
    d = abs(float(np.dot(unit(a), unit(b))))
    return math.acos(min(1.0, d))


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Resolve the quaternion double cover: w > 0, ties broken on x, y, z."""
    q = np.asarray(q, dtype=float)
    for c in (3, 0, 1, 2):
        if q[c] > 0.0:
            return q.copy()
        if q[c] < 0.0:
            return -q
    return q.copy()


@dataclass(frozen=True, eq=False)
class Pose:
    """A rigid transform: position plus unit quaternion (x, y, z, w)."""

    position: np.ndarray
    quat_xyzw: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.quat_xyzw, dtype=float).reshape(4)
        n = float(np.linalg.norm(q))
        if not np.isfinite(p).all() or not math.isfinite(n) or abs(n - 1.0) > 1e-6:
            raise ValueError("pose requires a finite position and a unit quaternion")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "quat_xyzw", canonical_quat(q / n))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([0.0, 0.0, 0.0, 1.0]))

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "Pose":
        mat = np.asarray(mat, dtype=float)
        q = Rotation.from_matrix(mat[:3, :3]).as_quat()
        return Pose(mat[:3, 3], q)

    @staticmethod
    def from_rotation(rot: np.ndarray, position) -> "Pose":
        q = Rotation.from_matrix(np.asarray(rot, dtype=float)).as_quat()
        return Pose(np.asarray(position, dtype=float), q)

    def rotation(self) -> np.ndarray:
        return Rotation.from_quat(self.quat_xyzw).as_matrix()

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation()
        m[:3, 3] = self.position
        return m

    def compose(self, other: "Pose") -> "Pose":
        return Pose.from_matrix(self.matrix() @ other.matrix())

    def transform(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.position

    def to_json(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "quat_xyzw": [float(x) for x in self.quat_xyzw],
        }

    @staticmethod
    def from_json(obj: dict) -> "Pose":
        return Pose(np.asarray(obj["position"], dtype=float),
                    np.asarray(obj["quat_xyzw"], dtype=float))
