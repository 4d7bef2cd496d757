"""Pupil lifting, optical axis and the angular gaze parameterization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateAxis, EmptyInput, GimbalDegenerate, PupilRayMiss
from .geometry import Sphere, normalize, ray_sphere_intersect
from .scene import CameraModel, backproject

ARCMIN_PER_RAD = 180.0 / math.pi * 60.0
DEVICE_UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class OpticalAxisEstimate:
    """Cornea and pupil centers plus the optical axis, all in the device frame."""

    cornea_3d: np.ndarray
    pupil_3d: np.ndarray
    optical_axis: np.ndarray


@dataclass(frozen=True)
class GazeFrameSpec:
    origin: np.ndarray
    reference_dir: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "reference_dir", normalize(self.reference_dir))

    def basis(self) -> np.ndarray:
        """Rows: right, up, forward. ``right`` stays in the device horizontal plane."""
        fwd = self.reference_dir
        right = np.cross(DEVICE_UP, fwd)
        if np.linalg.norm(right) < 1e-12:
            raise GimbalDegenerate("reference direction is vertical")
        right = normalize(right)
        up = np.cross(fwd, right)
        return np.array([right, up, fwd])


def lift_pupil_3d(camera: CameraModel, pupil_2d: np.ndarray, cornea: Sphere) -> np.ndarray:
    """Nearer intersection of the pupil ray with the corneal sphere (camera frame).

    Raises:
        PupilRayMiss: the ray misses the sphere.
    """
    ray = backproject(camera, pupil_2d)
    t = ray_sphere_intersect(ray, cornea)
    if t is None:
        raise PupilRayMiss(f"pupil ray through {tuple(np.round(pupil_2d, 3))} misses the cornea")
    return ray.at(t)


def optical_axis(cornea_3d: np.ndarray, pupil_3d: np.ndarray, camera: CameraModel) -> OpticalAxisEstimate:
    """Optical axis from camera-frame cornea and pupil centers, expressed in
    the device frame.

    Raises:
        DegenerateAxis: the two points coincide.
    """
    c = np.asarray(cornea_3d, dtype=float)
    p = np.asarray(pupil_3d, dtype=float)
    if np.linalg.norm(p - c) <= 1e-9:
        raise DegenerateAxis("cornea and pupil centers coincide")
    c_dev = camera.to_device(c)
    p_dev = camera.to_device(p)
    return OpticalAxisEstimate(c_dev, p_dev, normalize(p_dev - c_dev))


def gaze_origin(cornea_points: Sequence[np.ndarray], reference_target: np.ndarray | None = None) -> GazeFrameSpec:
    """Mean cornea position, with the reference direction toward
    ``reference_target`` (device forward if omitted)."""
    if len(cornea_points) == 0:
        raise EmptyInput("gaze origin needs at least one cornea estimate")
    origin = np.mean(np.asarray(cornea_points, dtype=float), axis=0)
    if reference_target is None:
        ref = np.array([0.0, 0.0, 1.0])
    else:
        ref = np.asarray(reference_target, dtype=float) - origin
    return GazeFrameSpec(origin, ref)


def to_angles(direction: np.ndarray, frame: GazeFrameSpec) -> tuple[float, float]:
    """(azimuth, elevation) in arcmin relative to the frame's reference direction.

    Azimuth turns toward device right, elevation toward up.
    """
    h, v = to_angles_rad(direction, frame)
    return h * ARCMIN_PER_RAD, v * ARCMIN_PER_RAD


def from_angles(horizontal: float, vertical: float, frame: GazeFrameSpec) -> np.ndarray:
    return from_angles_rad(horizontal / ARCMIN_PER_RAD, vertical / ARCMIN_PER_RAD, frame)


def to_angles_rad(direction: np.ndarray, frame: GazeFrameSpec) -> tuple[float, float]:
    x, y, z = frame.basis() @ normalize(direction)
    horiz = math.hypot(x, z)
    if math.atan2(horiz, abs(y)) < 1e-6:
        raise GimbalDegenerate("direction is too close to the vertical axis")
    return math.atan2(x, z), math.atan2(y, horiz)


def from_angles_rad(horizontal: float, vertical: float, frame: GazeFrameSpec) -> np.ndarray:
    cv = math.cos(vertical)
    local = np.array([cv * math.sin(horizontal), math.sin(vertical), cv * math.cos(horizontal)])
    return frame.basis().T @ local
