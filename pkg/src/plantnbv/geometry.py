"""Shared geometric types: camera poses, intrinsics, oriented boxes, workspace
bounds, and deterministic random streams.

Conventions used throughout the package:

* Quaternions are (x, y, z, w), normalized on construction.
* The camera looks along its local +x axis; image right is -y and image
  down is -z in the camera frame. With an identity orientation the camera
  therefore faces world +x, which matches the robot-facing-plant layout.
* All positions are in meters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = (0.0, 0.0, 0.0, 1.0)


def quat_normalize(q, tol: float = 1e-6) -> np.ndarray:
    """Return a unit quaternion; rejects inputs whose norm is off by > tol."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have 4 components, got shape {q.shape}")
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"quaternion norm {norm:.6g} deviates from 1 by more than {tol}")
    return q / norm


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a*b for (x, y, z, w) quaternions."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    x, y, z, w = q
    return np.array([-x, -y, -z, w])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be non-zero")
    half = 0.5 * angle
    return np.concatenate([np.sin(half) * axis / n, [np.cos(half)]])


def quat_between(v_from, v_to) -> np.ndarray:
    """Shortest-arc quaternion rotating unit vector v_from onto v_to."""
    a = np.asarray(v_from, dtype=np.float64)
    b = np.asarray(v_to, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    d = float(np.dot(a, b))
    if d > 1.0 - 1e-12:
        return np.array(IDENTITY_QUAT)
    if d < -1.0 + 1e-12:
        # 180 degrees: pick any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        return quat_from_axis_angle(axis, np.pi)
    axis = np.cross(a, b)
    q = np.concatenate([axis, [1.0 + d]])
    return q / np.linalg.norm(q)


def quat_to_matrix(q) -> np.ndarray:
    """3x3 rotation matrix for a unit (x, y, z, w) quaternion."""
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _frozen_vector(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).copy()
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Viewpoint:
    """A 6-DoF camera pose: position plus unit quaternion orientation."""

    position: np.ndarray
    orientation: np.ndarray = field(default=IDENTITY_QUAT)

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vector(self.position, 3, "position"))
        q = quat_normalize(self.orientation)
        q.flags.writeable = False
        object.__setattr__(self, "orientation", q)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def forward(self) -> np.ndarray:
        """World-frame direction of the camera's optical axis (local +x)."""
        return self.rotation_matrix()[:, 0].copy()

    def inverse(self) -> "Viewpoint":
        qinv = quat_conjugate(self.orientation)
        return Viewpoint(-quat_to_matrix(qinv) @ self.position, qinv)

    def distance_to(self, other: "Viewpoint") -> float:
        return float(np.linalg.norm(self.position - other.position))


def transform_point(pose: Viewpoint, p_local) -> np.ndarray:
    """Rigid transform of a local-frame point into the world frame."""
    return pose.rotation_matrix() @ np.asarray(p_local, dtype=np.float64) + pose.position


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model with a hard sensing range cutoff."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    max_range: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.max_range <= 0:
            raise ValueError("max_range must be positive")

    @classmethod
    def default(cls) -> "CameraIntrinsics":
        """320x240 at ~60 deg horizontal FOV, 1.5 m range."""
        return cls(width=320, height=240, fx=277.0, fy=277.0, cx=160.0, cy=120.0, max_range=1.5)


def pixel_to_ray(intr: CameraIntrinsics, u: float, v: float, pose: Viewpoint):
    """Back-project an image coordinate to a world-frame ray.

    Accepts continuous coordinates on the closed image rectangle
    [0, width] x [0, height] so that frustum corners are addressable.
    Returns (origin, unit direction).
    """
    if not (0.0 <= u <= intr.width and 0.0 <= v <= intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside image bounds {intr.width}x{intr.height}")
    d = np.array([1.0, -(u - intr.cx) / intr.fx, -(v - intr.cy) / intr.fy])
    d /= np.linalg.norm(d)
    return pose.position.copy(), pose.rotation_matrix() @ d


def camera_ray_directions(intr: CameraIntrinsics, stride: int = 1) -> np.ndarray:
    """Unit ray directions in the camera frame for every stride-th pixel.

    Returns an (n, 3) array in row-major pixel order (v outer, u inner).
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    us = np.arange(0, intr.width, stride, dtype=np.float64)
    vs = np.arange(0, intr.height, stride, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    d = np.stack(
        [
            np.ones_like(uu),
            -(uu - intr.cx) / intr.fx,
            -(vv - intr.cy) / intr.fy,
        ],
        axis=-1,
    ).reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@dataclass(frozen=True)
class OrientedBox:
    """Box given by center, half extents along its local axes, and orientation."""

    center: np.ndarray
    half_extents: np.ndarray
    orientation: np.ndarray = field(default=IDENTITY_QUAT)

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_vector(self.center, 3, "center"))
        he = _frozen_vector(self.half_extents, 3, "half_extents")
        if np.any(he <= 0):
            raise ValueError("half_extents must be positive")
        object.__setattr__(self, "half_extents", he)
        q = quat_normalize(self.orientation)
        q.flags.writeable = False
        object.__setattr__(self, "orientation", q)

    @classmethod
    def axis_aligned(cls, min_corner, max_corner) -> "OrientedBox":
        lo = np.asarray(min_corner, dtype=np.float64)
        hi = np.asarray(max_corner, dtype=np.float64)
        return cls(0.5 * (lo + hi), 0.5 * (hi - lo))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @property
    def min_corner(self) -> np.ndarray:
        # Tight only for identity orientation; callers needing a world AABB
        # of a rotated box should use world_aabb().
        return self.center - self.half_extents

    @property
    def max_corner(self) -> np.ndarray:
        return self.center + self.half_extents

    def world_aabb(self):
        """Axis-aligned bounding box (min, max) of the rotated box."""
        reach = np.abs(self.rotation_matrix()) @ self.half_extents
        return self.center - reach, self.center + reach


def box_contains(box: OrientedBox, p) -> bool:
    """True iff p lies inside the box; points on the boundary count as inside."""
    local = box.rotation_matrix().T @ (np.asarray(p, dtype=np.float64) - box.center)
    return bool(np.all(np.abs(local) <= box.half_extents))


@dataclass(frozen=True)
class WorkspaceBounds:
    """Axis-aligned region expected to contain the plant, plus its base prior."""

    box: OrientedBox
    plant_base: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.box.orientation, IDENTITY_QUAT, atol=1e-12):
            raise ValueError("workspace box must be axis-aligned (identity orientation)")
        object.__setattr__(self, "plant_base", _frozen_vector(self.plant_base, 3, "plant_base"))
        if not box_contains(self.box, self.plant_base):
            raise ValueError("plant_base must lie inside the workspace box")

    @classmethod
    def from_corners(cls, min_corner, max_corner, plant_base) -> "WorkspaceBounds":
        return cls(OrientedBox.axis_aligned(min_corner, max_corner), plant_base)

    @property
    def min_corner(self) -> np.ndarray:
        return self.box.min_corner

    @property
    def max_corner(self) -> np.ndarray:
        return self.box.max_corner

    def contains(self, p) -> bool:
        return box_contains(self.box, p)


class RandomStream:
    """Deterministic random stream with reproducibly derivable sub-streams.

    Built on the counter-based Philox generator: the same (seed, spawn path)
    always yields the same draw sequence, and child streams are independent
    of how much the parent has been consumed. Draw methods are delegated to
    the underlying numpy Generator (uniform, integers, normal, poisson, ...).
    """

    def __init__(self, seed: int, _spawn_key: tuple = ()):
        self.seed = int(seed)
        self._spawn_key = tuple(int(k) for k in _spawn_key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self._spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RandomStream":
        """Derive the index-th sub-stream; independent of parent consumption."""
        return RandomStream(self.seed, self._spawn_key + (int(index),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __getattr__(self, name):
        if name.startswith("_"):
            raise AttributeError(name)
        return getattr(self._gen, name)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={self._spawn_key})"
