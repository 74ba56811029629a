"""Geometric primitives shared by the simulator, tracker and mapper.

Conventions: right-handed frames. The LiDAR frame has x forward, y left and
z up. The camera frame has z along the optical axis, x right and y down, and
the image origin is the top-left pixel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class BehindCamera(ValueError):
    """Raised when a point cannot be projected because its depth is <= 1e-6."""


MIN_DEPTH = 1e-6


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        arr = np.asarray(x, dtype=float).reshape(3)
    else:
        arr = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite vector {arr}")
    return arr


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> tuple[float, float, float, float]:
    from scipy.spatial.transform import Rotation

    x, y, z, w = Rotation.from_matrix(np.asarray(m, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    if q[0] < 0:
        q = -q
    return tuple(float(v) for v in q / np.linalg.norm(q))


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p_out = R @ p_in + position``.

    ``orientation`` is a unit quaternion in (w, x, y, z) order.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        q = tuple(float(v) for v in self.orientation)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"orientation is not a unit quaternion: {q}")
        object.__setattr__(self, "orientation", q)
        object.__setattr__(self, "_rot", quat_to_matrix(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float) -> "Pose":
        half = 0.5 * yaw
        return cls(vec3(x, y, z), (float(np.cos(half)), 0.0, 0.0, float(np.sin(half))))

    @classmethod
    def from_matrix(cls, rotation: np.ndarray, translation) -> "Pose":
        return cls(vec3(translation), matrix_to_quat(rotation))

    @property
    def rotation(self) -> np.ndarray:
        return self._rot

    @property
    def yaw(self) -> float:
        r = self._rot
        return float(np.arctan2(r[1, 0], r[0, 0]))

    def inverse(self) -> "Pose":
        w, x, y, z = self.orientation
        rt = self._rot.T
        return Pose(-rt @ self.position, (w, -x, -y, -z))

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self ∘ other`` (apply ``other`` first)."""
        return Pose.from_matrix(self._rot @ other.rotation, self._rot @ other.position + self.position)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 3) array of points."""
        pts = np.asarray(points, dtype=float)
        return pts @ self._rot.T + self.position

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "orientation": list(self.orientation)}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.array(d["position"], dtype=float), tuple(d["orientation"]))


def transform_point(p, pose: Pose) -> np.ndarray:
    return pose.rotation @ vec3(p) + pose.position


@dataclass(frozen=True, eq=False)
class OrientedBox3:
    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0
    class_label: str = "person"
    score: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", vec3(self.center))
        object.__setattr__(self, "size", vec3(self.size))
        if np.any(self.size <= 0):
            raise ValueError(f"box size must be positive, got {self.size}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "size": self.size.tolist(),
            "yaw": float(self.yaw),
            "class": self.class_label,
            "score": float(self.score),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrientedBox3":
        return cls(np.array(d["center"]), np.array(d["size"]), d["yaw"], d["class"], d["score"])


@dataclass(frozen=True)
class Detection2D:
    center_px: tuple[float, float]
    extent_px: tuple[float, float] = (0.0, 0.0)
    class_label: str = "person"
    score: float = 1.0

    def __post_init__(self):
        if not all(np.isfinite(self.center_px)):
            raise ValueError("non-finite pixel center")
        if self.extent_px[0] < 0 or self.extent_px[1] < 0:
            raise ValueError("negative pixel extent")

    def to_dict(self) -> dict:
        return {
            "center_px": [float(v) for v in self.center_px],
            "extent_px": [float(v) for v in self.extent_px],
            "class": self.class_label,
            "score": float(self.score),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Detection2D":
        return cls(tuple(d["center_px"]), tuple(d["extent_px"]), d["class"], d["score"])


# LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd)
LIDAR_TO_CAMERA_ROTATION = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


def default_extrinsic() -> Pose:
    return Pose.from_matrix(LIDAR_TO_CAMERA_ROTATION, np.zeros(3))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Zero-distortion pinhole camera. ``extrinsic`` maps LiDAR to camera."""

    fx: float = 320.0
    fy: float = 320.0
    cx: float = 320.0
    cy: float = 240.0
    image_size: tuple[int, int] = (640, 480)
    extrinsic: Pose = field(default_factory=default_extrinsic)

    def __post_init__(self):
        w, h = self.image_size
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < w and 0 < self.cy < h):
            raise ValueError("principal point outside the image")

    def in_image(self, uv) -> bool:
        w, h = self.image_size
        return 0.0 <= uv[0] < w and 0.0 <= uv[1] < h

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "image_size": list(self.image_size),
            "extrinsic": self.extrinsic.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        ext = Pose.from_dict(d["extrinsic"]) if "extrinsic" in d else default_extrinsic()
        return cls(d["fx"], d["fy"], d["cx"], d["cy"], tuple(d["image_size"]), ext)


def project_to_image(point, cam: CameraModel) -> tuple[float, float]:
    xc, yc, zc = transform_point(point, cam.extrinsic)
    if zc <= MIN_DEPTH:
        raise BehindCamera(f"depth {zc:.3g} <= {MIN_DEPTH}")
    return (cam.fx * xc / zc + cam.cx, cam.fy * yc / zc + cam.cy)


def project_many(points: np.ndarray, cam: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection. Returns (uv (N,2), valid (N,)); invalid rows are NaN."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    pc = cam.extrinsic.apply(pts)
    valid = pc[:, 2] > MIN_DEPTH
    uv = np.full((len(pts), 2), np.nan)
    z = pc[valid, 2]
    uv[valid, 0] = cam.fx * pc[valid, 0] / z + cam.cx
    uv[valid, 1] = cam.fy * pc[valid, 1] / z + cam.cy
    return uv, valid


def backproject(uv, depth: float, cam: CameraModel) -> np.ndarray:
    """Inverse of :func:`project_to_image` for a known camera-frame depth."""
    u, v = uv
    pc = np.array([(u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth])
    return transform_point(pc, cam.extrinsic.inverse())


def euclidean3(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def euclidean2(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def wrap_angle(a: float) -> float:
    return float((a + np.pi) % (2 * np.pi) - np.pi)
