"""Pinhole camera model and the two preset views.

Conventions: the extrinsic pose maps robot-base coordinates to camera
coordinates, X_cam = R X_base + t, with +x right, +y down (image rows),
+z forward. Pixel (u, v) = (fx x/z + cx, fy y/z + cy).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray  # (3,3) base -> camera
    translation: np.ndarray  # (3,)
    near: float = 0.01
    far: float = 2.0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the image")
        if np.linalg.norm(self.rotation @ self.rotation.T - np.eye(3)) > 1e-8:
            raise InputError("extrinsic rotation is not orthonormal")

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project base-frame points; returns (pixel uv (N,2), depth z (N,))."""
        pc = self.to_camera(np.atleast_2d(points))
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * pc[:, 0] / z + self.cx
            v = self.fy * pc[:, 1] / z + self.cy
        return np.stack([u, v], axis=1), z

    @property
    def horizontal_fov_deg(self) -> float:
        return math.degrees(2.0 * math.atan(self.width / (2.0 * self.fx)))

    def to_json(self) -> str:
        return json.dumps(
            {
                "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist(),
                "near": self.near, "far": self.far,
            },
            indent=1, sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CameraModel":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "CameraModel":
        return cls.from_json(Path(path).read_text())


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Extrinsics for a camera at `position` looking at `target` (base frame)."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise InputError("up vector is parallel to the viewing direction")
    right /= nr
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=0)
    translation = -rotation @ position
    return rotation, translation


def default_camera(resolution: int = 256) -> CameraModel:
    """Side-on view covering the robot workspace, mimicking a fixed RGB-D rig."""
    rotation, translation = look_at(
        position=(0.45, 0.0, 0.125), target=(0.0, 0.0, 0.125)
    )
    fx = 1.3 * resolution
    return CameraModel(
        fx=fx, fy=fx,
        cx=(resolution - 1) / 2.0, cy=(resolution - 1) / 2.0,
        width=resolution, height=resolution,
        rotation=rotation, translation=translation,
    )


def wide_angle_camera(resolution: int = 512) -> CameraModel:
    """120-degree horizontal FOV preset, 50 mm from the robot's base."""
    rotation, translation = look_at(position=(0.05, 0.0, 0.0), target=(0.0, 0.0, 0.09))
    fx = resolution / (2.0 * math.tan(math.radians(60.0)))
    return CameraModel(
        fx=fx, fy=fx,
        cx=(resolution - 1) / 2.0, cy=(resolution - 1) / 2.0,
        width=resolution, height=resolution,
        rotation=rotation, translation=translation,
    )


CAMERA_PRESETS = {"default": default_camera, "wide": wide_angle_camera}
