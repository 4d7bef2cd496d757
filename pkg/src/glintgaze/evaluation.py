"""Calibrate-then-test evaluation protocol and angular error statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .cornea import DEFAULT_INIT_DISTANCE, DEFAULT_RADIUS, lift_cornea_3d
from .errors import EmptyInput, GeometryError, InsufficientCalibration, NoFixation, PupilRayMiss
from .gaze import ARCMIN_PER_RAD, OpticalAxisEstimate, gaze_origin, lift_pupil_3d, optical_axis
from .geometry import Sphere, normalize
from .mapper import (
    CalibrationSet,
    Mapper,
    TrainConfig,
    apply_mapper,
    fit_polynomial,
    net_init,
    net_train,
)
from .scene import EyePhysiology, Scene, make_target_grid
from .simulator import FrameObservation, NoiseModel, generate_dataset

MAPPERS = ("poly", "dense", "none")
REPORT_COLUMNS = ("Mean AE", "Std AE", "Q1 AE", "Q2 AE", "Q3 AE")


def angular_error_arcmin(estimated: np.ndarray, truth: np.ndarray) -> float:
    cos = float(np.clip(np.dot(estimated, truth), -1.0, 1.0))
    return math.acos(cos) * ARCMIN_PER_RAD


def pixel_error(estimated: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(estimated, dtype=float) - np.asarray(truth, dtype=float)))


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    std: float
    q1: float
    q2: float
    q3: float
    n: int

    def row(self) -> tuple[float, float, float, float, float]:
        return (self.mean, self.std, self.q1, self.q2, self.q3)


def summarize(errors: Sequence[float]) -> ErrorSummary:
    """Mean, sample standard deviation and linearly interpolated quartiles."""
    x = np.asarray(errors, dtype=float)
    if x.size == 0:
        raise EmptyInput("cannot summarize an empty error list")
    q1, q2, q3 = np.percentile(x, [25, 50, 75], method="linear")
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return ErrorSummary(float(x.mean()), std, float(q1), float(q2), float(q3), int(x.size))


def format_report(rows: Sequence[tuple[str, ErrorSummary]], title: str = "Gaze angular error (arcmin)") -> str:
    """Plain-text table, one line per method, columns Mean/Std/Q1/Q2/Q3 AE."""
    name_w = max([len("Model")] + [len(name) for name, _ in rows])
    header = " | ".join([f"{'Model':<{name_w}}"] + [f"{c:>8}" for c in REPORT_COLUMNS])
    lines = [title, header, "-" * len(header)]
    for name, s in rows:
        lines.append(" | ".join([f"{name:<{name_w}}"] + [f"{v:>8.2f}" for v in s.row()]))
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProtocolConfig:
    calibration_plane: int = 1
    frames_per_target: int = 1
    noise: NoiseModel = NoiseModel()
    mapper: str = "dense"
    seed: int = 0
    cornea_radius: float = DEFAULT_RADIUS
    init_distance: float = DEFAULT_INIT_DISTANCE
    polish: bool = False
    # "test": origin from the evaluated test frames; "calibration": reuse it
    test_origin: str = "test"
    per_target: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0 <= self.calibration_plane <= 5:
            raise ValueError("calibration plane must be in [0, 5]")
        if self.mapper not in MAPPERS:
            raise ValueError(f"mapper must be one of {MAPPERS}")
        if self.test_origin not in ("test", "calibration"):
            raise ValueError("test_origin must be 'test' or 'calibration'")


@dataclass
class FrameResult:
    observation: FrameObservation
    plane: int
    status: str = "ok"
    cornea_2d: Optional[np.ndarray] = None
    iterations: int = 0
    residual: float = float("nan")
    axis: Optional[OpticalAxisEstimate] = None
    gaze: Optional[np.ndarray] = None
    error_arcmin: float = float("nan")
    role: str = "test"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def estimate_frame(scene: Scene, obs: FrameObservation, r: float, init_distance: float, polish: bool = False):
    """Cornea, pupil and optical axis for one observation.

    Returns ``(CorneaEstimate, OpticalAxisEstimate)``; geometry failures raise.
    """
    cam = scene.camera
    est = lift_cornea_3d(cam, scene.rig, obs, r=r, init_distance=init_distance, polish=polish)
    if not obs.pupil_present:
        raise PupilRayMiss(f"frame {obs.frame_id}: pupil not detected")
    pupil = lift_pupil_3d(cam, obs.pupil, Sphere(est.cornea_3d, r))
    return est, optical_axis(est.cornea_3d, pupil, cam)


def estimate_frames(scene: Scene, observations, cfg: ProtocolConfig) -> list[FrameResult]:
    results = []
    for obs in observations:
        res = FrameResult(observation=obs, plane=obs.target_id // 9)
        res.role = "calibration" if res.plane == cfg.calibration_plane else "test"
        try:
            est, axis = estimate_frame(scene, obs, cfg.cornea_radius, cfg.init_distance, cfg.polish)
        except NoFixation:
            raise
        except GeometryError as exc:
            res.status = type(exc).__name__
        else:
            res.cornea_2d = est.cornea_2d
            res.iterations = est.iterations
            res.residual = est.final_residual
            res.axis = axis
        results.append(res)
    return results


def calibrate(results: Sequence[FrameResult], grid, cfg: ProtocolConfig):
    """Fit the configured mapper on the usable calibration frames.

    Returns ``(mapper_or_None, calibration GazeFrameSpec)``.
    """
    cal = [r for r in results if r.role == "calibration" and r.ok]
    if not cal:
        raise InsufficientCalibration("no usable calibration frames")
    center = grid.center(cfg.calibration_plane).position
    frame = gaze_origin([r.axis.cornea_3d for r in cal], center)
    if cfg.mapper == "none":
        return None, frame
    n_targets = len({r.observation.target_id for r in cal})
    if cfg.mapper == "poly" and n_targets < 6:
        raise InsufficientCalibration(f"only {n_targets} usable calibration targets, polynomial needs 6")
    pairs = CalibrationSet(
        np.array([r.axis.optical_axis for r in cal]),
        np.array([normalize(r.observation.target - r.axis.cornea_3d) for r in cal]),
    )
    if cfg.mapper == "poly":
        return fit_polynomial(pairs, frame), frame
    net, _ = net_train(net_init(cfg.seed), pairs, cfg.train)
    return net, frame


@dataclass
class ProtocolResult:
    summary: ErrorSummary
    frames: list[FrameResult]
    mapper: Optional[Mapper]
    calibration_frame: object
    test_origin: np.ndarray
    dropped: int
    evaluated: int

    @property
    def total_test(self) -> int:
        return self.dropped + self.evaluated


def run_protocol(scene: Scene, phys: EyePhysiology, cfg: ProtocolConfig = ProtocolConfig()) -> ProtocolResult:
    """Simulate one subject, calibrate on one depth plane, test on the rest."""
    grid = make_target_grid(scene.grid)
    noise = replace(cfg.noise, seed=cfg.seed)
    data = generate_dataset(scene, [phys], grid, cfg.frames_per_target, noise)
    return evaluate_observations(scene, [rec.observation for rec in data], cfg, grid)


def evaluate_observations(scene: Scene, observations, cfg: ProtocolConfig, grid=None) -> ProtocolResult:
    """Protocol on pre-computed observations (simulated or loaded from CSV)."""
    grid = grid or make_target_grid(scene.grid)
    results = estimate_frames(scene, observations, cfg)
    mapper, cal_frame = calibrate(results, grid, cfg)

    tests = [r for r in results if r.role == "test"]
    good = [r for r in tests if r.ok]
    if not good:
        raise EmptyInput("no test frame could be evaluated")
    if cfg.test_origin == "calibration":
        origin = cal_frame.origin
    else:
        origin = np.mean([r.axis.cornea_3d for r in good], axis=0)

    for r in good:
        r.gaze = apply_mapper(mapper, r.axis.optical_axis)
        truth = normalize(r.observation.target - origin)
        r.error_arcmin = angular_error_arcmin(r.gaze, truth)

    if cfg.per_target:
        by_target: dict[int, list[float]] = {}
        for r in good:
            by_target.setdefault(r.observation.target_id, []).append(r.error_arcmin)
        errors = [float(np.mean(v)) for _, v in sorted(by_target.items())]
    else:
        errors = [r.error_arcmin for r in good]
    return ProtocolResult(
        summary=summarize(errors),
        frames=results,
        mapper=mapper,
        calibration_frame=cal_frame,
        test_origin=origin,
        dropped=len(tests) - len(good),
        evaluated=len(good),
    )


@dataclass(frozen=True)
class SweepRow:
    sigma: float
    summary: ErrorSummary
    seed_means: tuple[float, ...]


def noise_sweep(
    scene: Scene,
    phys: EyePhysiology,
    sigmas: Sequence[float],
    cfg: ProtocolConfig = ProtocolConfig(),
    n_seeds: int = 1,
) -> list[SweepRow]:
    """Protocol runs at each glint/pupil noise level.

    Every level reuses seeds ``cfg.seed .. cfg.seed + n_seeds - 1``, so the
    unit noise draws are shared and only their scale changes. Errors from all
    seeds are pooled into one summary per level.
    """
    if list(sigmas) != sorted(sigmas):
        raise ValueError("sigmas must be sorted ascending")
    rows = []
    for sigma in sigmas:
        noise = replace(cfg.noise, glint_sigma=sigma, pupil_sigma=sigma)
        pooled: list[float] = []
        means = []
        for k in range(n_seeds):
            run_cfg = replace(cfg, noise=noise, seed=cfg.seed + k)
            result = run_protocol(scene, phys, run_cfg)
            errs = [f.error_arcmin for f in result.frames if f.role == "test" and f.ok]
            pooled.extend(errs)
            means.append(result.summary.mean)
        summary = summarize(pooled) if n_seeds > 1 else result.summary
        rows.append(SweepRow(sigma, summary, tuple(means)))
    return rows


METRIC_FIELDS = (
    "subject_id",
    "target_id",
    "frame_id",
    "plane",
    "role",
    "status",
    "cornea_u",
    "cornea_v",
    "cornea_x",
    "cornea_y",
    "cornea_z",
    "iterations",
    "residual_m",
    "gaze_x",
    "gaze_y",
    "gaze_z",
    "error_arcmin",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def metrics_csv(result: ProtocolResult) -> str:
    """Per-frame rows followed by ``#``-prefixed summary footer lines."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_FIELDS)
    for f in result.frames:
        obs = f.observation
        c2 = f.cornea_2d if f.cornea_2d is not None else [None, None]
        c3 = f.axis.cornea_3d if f.axis is not None else [None] * 3
        g = f.gaze if f.gaze is not None else [None] * 3
        writer.writerow(
            [obs.subject_id, obs.target_id, obs.frame_id, f.plane, f.role, f.status]
            + [_fmt(None if v is None else float(v)) for v in c2]
            + [_fmt(None if v is None else float(v)) for v in c3]
            + [f.iterations if f.ok else "", _fmt(f.residual)]
            + [_fmt(None if v is None else float(v)) for v in g]
            + [_fmt(f.error_arcmin)]
        )
    s = result.summary
    buf.write(f"# mean_arcmin={s.mean!r}\n# std_arcmin={s.std!r}\n")
    buf.write(f"# q1_arcmin={s.q1!r}\n# q2_arcmin={s.q2!r}\n# q3_arcmin={s.q3!r}\n")
    buf.write(f"# evaluated={result.evaluated}\n# dropped={result.dropped}\n")
    return buf.getvalue()


def write_metrics_csv(result: ProtocolResult, path: Union[str, Path]) -> None:
    Path(path).write_text(metrics_csv(result))
