"""Forward model: glints, pupil and ground truth for a fixating eye.

Stands in for both the captured dataset and the image front-end. Glint
positions come from solving the specular reflection point of each LED on the
corneal sphere; the pupil is the projected 3D pupil center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InsideSphere, NoFixation
from .geometry import Sphere, reflect_direction
from .scene import (
    CameraModel,
    EyePhysiology,
    EyePose,
    Scene,
    Target,
    TargetGrid,
    fixate,
    make_target_grid,
    project,
)

BISECTION_STEPS = 80
COLLINEAR_TOL = 1e-9


class GlintPoint(NamedTuple):
    point: np.ndarray
    # True when camera, LED and cornea center are collinear and the
    # retro-reflection point was returned instead of a bisection solution
    collinear: bool


def _plane_basis(o: np.ndarray, led: np.ndarray, center: np.ndarray):
    """In-plane unit vectors ``u`` (toward O) and ``v`` (toward L, orthogonal
    to ``u``), plus the angle between the directions to O and L."""
    to_o = o - center
    to_l = led - center
    u = to_o / np.linalg.norm(to_o)
    w = to_l / np.linalg.norm(to_l)
    cos_t = float(np.clip(np.dot(u, w), -1.0, 1.0))
    perp = w - cos_t * u
    sin_t = float(np.linalg.norm(perp))
    theta_max = math.atan2(sin_t, cos_t)
    v = perp / sin_t if sin_t > 0 else np.zeros(3)
    return u, v, theta_max


def _bisector_mismatch(theta: float, r: float, a: float, lx: float, ly: float) -> float:
    """n.dir(G->L) - n.dir(G->O) at arc angle ``theta``, in plane coordinates
    where the cornea center is the origin and O = (a, 0)."""
    nx, ny = math.cos(theta), math.sin(theta)
    gx, gy = r * nx, r * ny
    dlx, dly = lx - gx, ly - gy
    dox, doy = a - gx, -gy
    return (nx * dlx + ny * dly) / math.hypot(dlx, dly) - (nx * dox + ny * doy) / math.hypot(dox, doy)


def solve_glint_point(camera_center: np.ndarray, led: np.ndarray, cornea: Sphere) -> GlintPoint:
    """Specular reflection point of ``led`` on ``cornea`` as seen from ``camera_center``.

    The point lies in the plane of camera, LED and sphere center, on the arc
    between the directions to camera and LED, where the surface normal bisects
    the directions to both. Found by bisection on the arc angle.

    When no surface point sees both camera and LED, the returned point still
    satisfies the bisector condition but its normal faces away from the
    camera; callers test ``n . (O - G) > 0`` to decide visibility.

    Raises:
        InsideSphere: camera or LED inside the sphere.
    """
    o = np.asarray(camera_center, dtype=float)
    led = np.asarray(led, dtype=float)
    c, r = cornea.center, cornea.radius
    if np.linalg.norm(o - c) <= r or np.linalg.norm(led - c) <= r:
        raise InsideSphere("camera and LED must lie outside the corneal sphere")

    u, v, theta_max = _plane_basis(o, led, c)
    if theta_max < COLLINEAR_TOL or theta_max > math.pi - COLLINEAR_TOL:
        return GlintPoint(c + r * u, True)

    a = float(np.linalg.norm(o - c))
    b = float(np.linalg.norm(led - c))
    lx, ly = b * math.cos(theta_max), b * math.sin(theta_max)
    lo, hi = 1e-9, theta_max
    f_lo = _bisector_mismatch(lo, r, a, lx, ly)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        f_mid = _bisector_mismatch(mid, r, a, lx, ly)
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 0.0:
            break
    theta = 0.5 * (lo + hi)
    return GlintPoint(c + r * (math.cos(theta) * u + math.sin(theta) * v), False)


def reflection_law_residual(g: np.ndarray, camera_center: np.ndarray, led: np.ndarray, cornea: Sphere) -> float:
    """|reflect(dir(L->G), n) - dir(G->O)|, zero for an exact reflection point."""
    n = (g - cornea.center) / cornea.radius
    incoming = (g - led) / np.linalg.norm(g - led)
    outgoing = (camera_center - g) / np.linalg.norm(camera_center - g)
    return float(np.linalg.norm(reflect_direction(incoming, n) - outgoing))


@dataclass(frozen=True)
class NoiseModel:
    glint_sigma: float = 0.0
    pupil_sigma: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.glint_sigma < 0 or self.pupil_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout probability must lie in [0, 1]")


@dataclass(frozen=True)
class FrameObservation:
    """What a detector would report for one frame.

    ``glints`` is ``(4, 2)`` pixels with NaN rows for absent glints.
    ``target`` is in the device frame.
    """

    glints: np.ndarray
    glint_present: np.ndarray
    pupil: np.ndarray
    pupil_present: bool
    target: np.ndarray
    subject_id: int = 0
    target_id: int = 0
    frame_id: int = 0

    @property
    def n_glints(self) -> int:
        return int(np.count_nonzero(self.glint_present))


@dataclass(frozen=True)
class FrameTruth:
    eye_pose: EyePose
    glints: np.ndarray
    pupil: np.ndarray
    reflection_points: np.ndarray
    # camera-facing hemisphere and image-bounds test, before dropout
    glint_visible: np.ndarray


@dataclass(frozen=True)
class FrameRecord:
    observation: FrameObservation
    truth: FrameTruth


@dataclass(frozen=True)
class SimDataset:
    records: tuple[FrameRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def frame_rng(seed: int, subject_id: int, target_id: int, frame_id: int) -> np.random.Generator:
    """Counter-based generator keyed on the record ids, so frames can be
    generated in any order."""
    key = np.random.SeedSequence([seed, subject_id, target_id, frame_id])
    return np.random.Generator(np.random.Philox(key))


def render_truth(scene: Scene, phys: EyePhysiology, target: np.ndarray) -> FrameTruth:
    camera = scene.camera
    pose = fixate(phys, target, camera)
    cornea = Sphere(pose.cornea_center, phys.cornea_radius)
    origin = camera.center
    points, pixels, visible = [], [], []
    for led in scene.rig.led_positions:
        g = solve_glint_point(origin, led, cornea).point
        n = (g - cornea.center) / cornea.radius
        to_cam = origin - g
        facing = float(np.dot(to_cam, n)) > 0.0 and g[2] > 1e-9
        px = project(camera, g) if g[2] > 1e-9 else np.full(2, np.nan)
        points.append(g)
        pixels.append(px)
        visible.append(facing and camera.in_bounds(px))
    return FrameTruth(
        eye_pose=pose,
        glints=np.array(pixels),
        pupil=project(camera, pose.pupil_center),
        reflection_points=np.array(points),
        glint_visible=np.array(visible, dtype=bool),
    )


def observe(
    camera: CameraModel,
    truth: FrameTruth,
    noise: NoiseModel,
    rng: np.random.Generator,
    target: np.ndarray,
    ids: tuple[int, int, int] = (0, 0, 0),
) -> FrameObservation:
    """Noisy, possibly incomplete detections for a rendered frame.

    Random draws are taken in a fixed order whether or not a glint is visible,
    so two noise levels with the same generator state see the same unit draws.
    """
    glint_noise = rng.standard_normal((4, 2))
    drops = rng.random(4)
    pupil_noise = rng.standard_normal(2)

    present = truth.glint_visible & (drops >= noise.dropout_prob)
    if noise.dropout_prob >= 1.0:
        present = np.zeros(4, dtype=bool)
    glints = truth.glints + noise.glint_sigma * glint_noise
    glints[~present] = np.nan

    pupil = truth.pupil + noise.pupil_sigma * pupil_noise
    pupil_present = bool(truth.eye_pose.pupil_center[2] > 1e-9 and camera.in_bounds(truth.pupil))
    if not pupil_present:
        pupil = np.full(2, np.nan)
    return FrameObservation(
        glints=glints,
        glint_present=present,
        pupil=pupil,
        pupil_present=pupil_present,
        target=np.asarray(target, dtype=float),
        subject_id=ids[0],
        target_id=ids[1],
        frame_id=ids[2],
    )


def render_frame(
    scene: Scene,
    phys: EyePhysiology,
    target: np.ndarray,
    noise: NoiseModel = NoiseModel(),
    rng: np.random.Generator | None = None,
    ids: tuple[int, int, int] = (0, 0, 0),
) -> tuple[FrameObservation, FrameTruth]:
    """Render one frame; ``target`` in the device frame.

    Raises:
        NoFixation: the eye cannot fixate ``target``.
    """
    if rng is None:
        rng = frame_rng(noise.seed, *ids)
    truth = render_truth(scene, phys, target)
    return observe(scene.camera, truth, noise, rng, target, ids), truth


def generate_dataset(
    scene: Scene,
    subjects: Sequence[EyePhysiology],
    grid: TargetGrid | None = None,
    frames_per_target: int = 1,
    noise: NoiseModel = NoiseModel(),
) -> SimDataset:
    """All frames for every subject and target, ordered subject/target/frame."""
    if frames_per_target < 1:
        raise ValueError("frames_per_target must be at least 1")
    if grid is None:
        grid = make_target_grid(scene.grid)
    records = []
    for sid, phys in enumerate(subjects):
        for target in grid:
            # the eye pose does not change between frames of one fixation
            try:
                truth = render_truth(scene, phys, target.position)
            except NoFixation as exc:
                raise NoFixation(f"subject {sid}, target {target.target_id}: {exc}") from exc
            for fid in range(frames_per_target):
                ids = (sid, target.target_id, fid)
                rng = frame_rng(noise.seed, *ids)
                obs = observe(scene.camera, truth, noise, rng, target.position, ids)
                records.append(FrameRecord(obs, truth))
    return SimDataset(tuple(records))


def target_by_id(grid: TargetGrid, target_id: int) -> Target:
    return grid.targets[target_id]
