"""The fixed six-pose camera rig and its rigid-transform realization.

Novel views use absolute elevations and azimuths relative to the input
view: elevations interleave +30 (camera raised, viewing downward) and
-20 degrees, azimuths start at 30 degrees and advance by 60 per pose.
Nothing in this module takes an input-view elevation: relative azimuth
plus absolute elevation is the whole point of the rig.

World frame: +z is the gravity axis (up).  Camera frame is OpenCV-style
(x right, y down, z forward), world-to-camera, with the optical axis
through the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NOVEL_ELEVATIONS = (30.0, -20.0, 30.0, -20.0, 30.0, -20.0)
NOVEL_AZIMUTHS = (30.0, 90.0, 150.0, 210.0, 270.0, 330.0)
DEFAULT_RADIUS = 2.5


@dataclass(frozen=True)
class PoseAngles:
    elevation_deg: float
    azimuth_deg: float
    radius: float

    def __post_init__(self):
        if not -90.0 < self.elevation_deg < 90.0:
            raise ValueError(f"elevation {self.elevation_deg} outside (-90, 90)")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "azimuth_deg", float(self.azimuth_deg) % 360.0)


@dataclass(frozen=True)
class CameraExtrinsics:
    rotation: np.ndarray  # 3x3 world-to-camera
    translation: np.ndarray  # 3, t = -R @ center

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation


def novel_pose_spec(i: int, radius: float = DEFAULT_RADIUS) -> PoseAngles:
    """Pose of novel view i in 0..5 (azimuth relative to the input view)."""
    if not 0 <= i <= 5:
        raise ValueError(f"novel view index {i} outside 0..5")
    return PoseAngles(NOVEL_ELEVATIONS[i], NOVEL_AZIMUTHS[i], radius)


def camera_center(angles: PoseAngles) -> np.ndarray:
    e = np.deg2rad(angles.elevation_deg)
    a = np.deg2rad(angles.azimuth_deg)
    return angles.radius * np.array(
        [np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], dtype=np.float64
    )


def look_at(angles: PoseAngles) -> CameraExtrinsics:
    """Place the camera on the view sphere, optical axis through the origin."""
    if abs(abs(angles.elevation_deg) - 90.0) < 1e-9:
        raise ValueError("elevation +-90 degrees is degenerate (up-vector undefined)")
    c = camera_center(angles)
    fwd = -c / np.linalg.norm(c)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=0)
    return CameraExtrinsics(rotation=rot, translation=-rot @ c)


def recover_angles(e: CameraExtrinsics) -> PoseAngles:
    """Inverse of look_at; rejects centers on the gravity axis."""
    c = e.center
    r = float(np.linalg.norm(c))
    horiz = float(np.hypot(c[0], c[1]))
    if horiz < 1e-9 * max(r, 1.0):
        raise ValueError("camera center on the gravity axis: azimuth undefined")
    elev = np.rad2deg(np.arcsin(np.clip(c[2] / r, -1.0, 1.0)))
    azim = np.rad2deg(np.arctan2(c[1], c[0])) % 360.0
    return PoseAngles(float(elev), float(azim), r)


def rotation_about_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    ca, sa = np.cos(a), np.sin(a)
    return np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
