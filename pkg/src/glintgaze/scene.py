"""Camera, LED rig, eye model and the fixation-target protocol.

Frames
------
*Camera frame*: origin at the camera center, ``x`` right, ``y`` down, ``z``
along the viewing direction (pixels grow with ``x`` and ``y``).

*Device frame*: headset-fixed, ``z`` forward (toward the display), ``y`` up,
``x`` completing a right-handed frame. The default rig places the nominal
eyeball center at the device origin, so targets and gaze angles are measured
from the eye.

``CameraModel.rotation`` maps camera-frame vectors to the device frame and
``CameraModel.translation`` is the camera center in device coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateProjection, NoFixation
from .geometry import Ray, angle_between, normalize

CONSISTENT = "consistent"
PHYSIOLOGICAL = "physiological"

PLANE_DEPTHS = (0.5, 0.75, 1.0, 1.5, 2.0, 3.0)


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("rotation must be a 3x3 orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @property
    def center(self) -> np.ndarray:
        """Camera center in its own frame."""
        return np.zeros(3)

    def to_device(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def to_camera(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.translation)

    def dir_to_device(self, d: np.ndarray) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=float)

    def dir_to_camera(self, d: np.ndarray) -> np.ndarray:
        return self.rotation.T @ np.asarray(d, dtype=float)

    def in_bounds(self, px: np.ndarray) -> bool:
        return 0.0 <= px[0] <= self.width and 0.0 <= px[1] <= self.height


def project(camera: CameraModel, p: np.ndarray) -> np.ndarray:
    """Pinhole projection of a camera-frame point to pixels.

    Points behind the camera still get the algebraic projection; only the
    ``z = 0`` plane is rejected.
    """
    x, y, z = (float(c) for c in p)
    if abs(z) < 1e-9:
        raise DegenerateProjection(f"point {p} lies on the camera plane")
    return np.array([camera.cx + camera.fx * x / z, camera.cy + camera.fy * y / z])


def backproject(camera: CameraModel, px: np.ndarray) -> Ray:
    d = np.array([(px[0] - camera.cx) / camera.fx, (px[1] - camera.cy) / camera.fy, 1.0])
    return Ray(np.zeros(3), d)


def look_at_rotation(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Camera->device rotation for a camera at ``position`` looking at ``target``.

    The camera ``x`` axis is kept in the device horizontal plane.
    """
    z = normalize(np.asarray(target, dtype=float) - np.asarray(position, dtype=float))
    x = np.cross(np.array([0.0, 1.0, 0.0]), z)
    if np.linalg.norm(x) < 1e-9:
        x = np.array([1.0, 0.0, 0.0])
    x = -normalize(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def default_camera(
    fx: float = 600.0,
    fy: float = 600.0,
    eye_distance: float = 0.035,
    pitch_deg: float = 30.0,
    width: int = 640,
    height: int = 480,
) -> CameraModel:
    """Off-axis eye camera below the display axis, aimed at the eyeball center."""
    pitch = math.radians(pitch_deg)
    position = eye_distance * np.array([0.0, -math.sin(pitch), math.cos(pitch)])
    return CameraModel(
        fx=fx,
        fy=fy,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        rotation=look_at_rotation(position, np.zeros(3)),
        translation=position,
    )


@dataclass(frozen=True)
class LedRig:
    """Four IR LED positions, camera frame, shape ``(4, 3)``."""

    led_positions: np.ndarray

    def __post_init__(self):
        leds = np.asarray(self.led_positions, dtype=float)
        if leds.shape != (4, 3):
            raise ValueError(f"expected 4 LEDs with xyz, got shape {leds.shape}")
        if np.any(np.abs(leds[:, 2]) < 1e-6):
            raise ValueError("an LED lies on the camera plane z = 0")
        object.__setattr__(self, "led_positions", leds)

    def __len__(self) -> int:
        return 4


def rectangular_rig(
    camera: CameraModel, width: float = 0.040, height: float = 0.030, depth: float = 0.025
) -> LedRig:
    """LEDs on the corners of a ``width x height`` rectangle centered on the
    display axis at device ``z = depth``."""
    hw, hh = width / 2.0, height / 2.0
    corners = [(-hw, hh), (hw, hh), (hw, -hh), (-hw, -hh)]
    return LedRig(np.array([camera.to_camera(np.array([x, y, depth])) for x, y in corners]))


@dataclass(frozen=True)
class EyePhysiology:
    """Per-subject eye constants.

    ``eyeball_center`` is in the camera frame; ``kappa`` is
    ``(horizontal, vertical)`` in radians.
    """

    eyeball_center: np.ndarray
    cornea_radius: float = 0.0078
    cornea_offset: float = 0.0053
    pupil_mode: str = PHYSIOLOGICAL
    pupil_offset: float = 0.0042
    kappa: tuple[float, float] = (math.radians(5.0), math.radians(1.5))

    def __post_init__(self):
        object.__setattr__(self, "eyeball_center", np.asarray(self.eyeball_center, dtype=float))
        if not self.cornea_radius > 0:
            raise ValueError("cornea radius must be positive")
        if self.pupil_mode not in (CONSISTENT, PHYSIOLOGICAL):
            raise ValueError(f"unknown pupil mode {self.pupil_mode!r}")
        if self.pupil_mode == PHYSIOLOGICAL and not 0 <= self.pupil_offset <= self.cornea_radius:
            raise ValueError("pupil offset must lie in [0, cornea_radius]")

    @property
    def effective_pupil_offset(self) -> float:
        if self.pupil_mode == CONSISTENT:
            return self.cornea_radius
        return self.pupil_offset


def default_physiology(camera: CameraModel, **overrides) -> EyePhysiology:
    """Schematic-eye defaults with the eyeball at the device origin."""
    return EyePhysiology(eyeball_center=camera.to_camera(np.zeros(3)), **overrides)


@dataclass(frozen=True)
class EyePose:
    """Per-frame eye state; points and axes in the camera frame."""

    optical_axis: np.ndarray
    visual_axis: np.ndarray
    cornea_center: np.ndarray
    pupil_center: np.ndarray
    iterations: int = 0


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def kappa_matrix(kappa: tuple[float, float]) -> np.ndarray:
    """Yaw by ``kappa[0]`` about device ``y``, then pitch ``kappa[1]`` about
    the yawed horizontal axis.

    Positive angles turn ``+z`` toward ``+x`` and ``+y``, so the rotation agrees
    with the azimuth/elevation convention of :func:`glintgaze.gaze.to_angles`.
    """
    return _rot_y(kappa[0]) @ _rot_x(-kappa[1])


def apply_kappa(axis: np.ndarray, kappa: tuple[float, float]) -> np.ndarray:
    return kappa_matrix(kappa) @ np.asarray(axis, dtype=float)


def remove_kappa(axis: np.ndarray, kappa: tuple[float, float]) -> np.ndarray:
    return kappa_matrix(kappa).T @ np.asarray(axis, dtype=float)


def fixate(
    phys: EyePhysiology,
    target: np.ndarray,
    camera: Optional[CameraModel] = None,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> EyePose:
    """Eye pose whose visual axis passes from the cornea center through ``target``.

    ``target`` is in the device frame. Without a camera the device and camera
    frames coincide. Solved by the fixed point
    ``o <- remove_kappa(normalize(T - (E + d_ec * o)))``.
    """
    if camera is None:
        camera = CameraModel(1.0, 1.0, 0.5, 0.5, 1, 1)
    target = np.asarray(target, dtype=float)
    eye = camera.to_device(phys.eyeball_center)
    if np.linalg.norm(target - eye) <= 2.0 * phys.cornea_offset:
        raise NoFixation("target too close to the eyeball center")

    optical = normalize(target - eye)
    for it in range(1, max_iter + 1):
        cornea = eye + phys.cornea_offset * optical
        new = normalize(remove_kappa(normalize(target - cornea), phys.kappa))
        step = angle_between(new, optical)
        optical = new
        if step < tol:
            break
    else:
        raise NoFixation(f"fixation did not converge in {max_iter} iterations")

    cornea = eye + phys.cornea_offset * optical
    visual = apply_kappa(optical, phys.kappa)
    if angle_between(visual, target - cornea) > 1e-9:
        raise NoFixation("fixation residual above 1e-9 rad")
    pupil = cornea + phys.effective_pupil_offset * optical
    return EyePose(
        optical_axis=camera.dir_to_camera(optical),
        visual_axis=camera.dir_to_camera(visual),
        cornea_center=camera.to_camera(cornea),
        pupil_center=camera.to_camera(pupil),
        iterations=it,
    )


@dataclass(frozen=True)
class GridConfig:
    depths: tuple[float, ...] = PLANE_DEPTHS
    # angular half-extent (deg) for odd and even plane indices
    half_extent_odd: float = 10.0
    half_extent_even: float = 7.0


@dataclass(frozen=True)
class Target:
    target_id: int
    plane: int
    row: int
    col: int
    position: np.ndarray


@dataclass(frozen=True)
class TargetGrid:
    targets: tuple[Target, ...]

    def __len__(self) -> int:
        return len(self.targets)

    def __iter__(self):
        return iter(self.targets)

    def plane(self, index: int) -> list[Target]:
        return [t for t in self.targets if t.plane == index]

    def center(self, plane: int) -> Target:
        return next(t for t in self.targets if t.plane == plane and t.row == 1 and t.col == 1)


def make_target_grid(config: GridConfig = GridConfig()) -> TargetGrid:
    """3x3 fixation grid on every depth plane, ids ``plane*9 + row*3 + col``.

    Row 0 is the top row, column 0 the left column. The angular spacing
    alternates with plane parity.
    """
    targets = []
    for plane, depth in enumerate(config.depths):
        half = config.half_extent_odd if plane % 2 else config.half_extent_even
        t = math.tan(math.radians(half))
        for row, vy in enumerate((t, 0.0, -t)):
            for col, hx in enumerate((-t, 0.0, t)):
                targets.append(
                    Target(
                        target_id=len(targets),
                        plane=plane,
                        row=row,
                        col=col,
                        position=np.array([depth * hx, depth * vy, depth]),
                    )
                )
    return TargetGrid(tuple(targets))


@dataclass(frozen=True)
class Scene:
    camera: CameraModel
    rig: LedRig
    grid: GridConfig = GridConfig()


def default_scene() -> Scene:
    camera = default_camera()
    return Scene(camera=camera, rig=rectangular_rig(camera))
