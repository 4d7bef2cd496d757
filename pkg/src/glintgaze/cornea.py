"""Cornea center estimation from glints.

Two stages:

1. **Cornea 2D.** For every visible glint, the image line from the projected
   LED to the glint passes through the projected cornea center, because
   camera, LED, reflection point and cornea center are co-planar. The
   estimate is the least-squares intersection of those lines.
2. **Cornea 3D.** The cornea center lies on the camera ray through the
   cornea 2D point. For a hypothesized distance along that ray, each glint ray
   is intersected with the corneal sphere and reflected about the surface
   normal; the reflected line should pass through its LED. The mean LED-line
   distance is minimized by gradient descent over the distance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientGlints, InsufficientLines
from .geometry import Line2, intersect_lines2_lsq, point_to_line2_distance
from .scene import CameraModel, LedRig, backproject, project
from .simulator import FrameObservation

log = logging.getLogger(__name__)

MAX_ITERATIONS = 100
T_MIN = 0.005
T_MAX = 0.200
DEFAULT_RADIUS = 0.0078
DEFAULT_INIT_DISTANCE = 0.035


@dataclass(frozen=True)
class CorneaEstimate:
    cornea_2d: np.ndarray
    cornea_3d: np.ndarray
    iterations: int
    final_residual: float
    used_glints: tuple[int, ...]
    converged: bool = True

    def __post_init__(self):
        assert self.iterations <= MAX_ITERATIONS
        assert len(self.used_glints) >= 2


def led_glint_lines(camera: CameraModel, rig: LedRig, obs: FrameObservation) -> list[Line2]:
    """One image line per present glint, from the projected LED to the glint."""
    lines = []
    for led, glint, present in zip(rig.led_positions, obs.glints, obs.glint_present):
        if present:
            lines.append(Line2(project(camera, led), glint))
    return lines


def cornea_line_loss(p: np.ndarray, lines: Sequence[Line2]) -> float:
    """Mean perpendicular pixel distance from ``p`` to ``lines``."""
    if not lines:
        raise InsufficientLines("cornea line loss needs at least one line")
    return sum(point_to_line2_distance(p, line) for line in lines) / len(lines)


def solve_cornea_2d(camera: CameraModel, rig: LedRig, obs: FrameObservation) -> np.ndarray:
    """Projected cornea center: global minimizer of the summed squared
    distances to the LED-glint lines.

    Raises:
        InsufficientGlints: fewer than two present glints.
        SingularGeometry: the lines are (nearly) parallel.
    """
    if obs.n_glints < 2:
        raise InsufficientGlints(f"frame {obs.frame_id}: {obs.n_glints} glint(s), need 2")
    point, _ = intersect_lines2_lsq(led_glint_lines(camera, rig, obs))
    return point


class _GlintRays:
    """Backprojected glint rays and their LEDs, stacked for vectorized
    residual evaluation."""

    def __init__(self, camera: CameraModel, rig: LedRig, obs: FrameObservation):
        idx = np.flatnonzero(obs.glint_present)
        if idx.size < 1:
            raise InsufficientGlints(f"frame {obs.frame_id}: no glints present")
        self.indices = tuple(int(i) for i in idx)
        self.dirs = np.array([backproject(camera, obs.glints[i]).direction for i in idx])
        self.leds = rig.led_positions[idx]

    def residual(self, center: np.ndarray, r: float) -> float:
        # rays start at the camera center (origin)
        b = -(self.dirs @ center)
        c = float(center @ center) - r * r
        disc = b * b - c
        hit = disc >= 0.0
        per_glint = np.empty(len(self.dirs))

        if np.any(hit):
            root = np.sqrt(disc[hit])
            t = -b[hit] - root
            t = np.where(t >= 0.0, t, -b[hit] + root)
            d = self.dirs[hit]
            g = t[:, None] * d
            n = (g - center) / r
            refl = d - 2.0 * np.sum(d * n, axis=1)[:, None] * n
            w = self.leds[hit] - g
            along = np.sum(w * refl, axis=1)[:, None] * refl
            per_glint[hit] = np.linalg.norm(w - along, axis=1)

        miss = ~hit
        if np.any(miss):
            # hinge: distance by which the ray misses the sphere, plus r
            d = self.dirs[miss]
            perp = center - (d @ center)[:, None] * d
            gap = np.linalg.norm(perp, axis=1) - r
            per_glint[miss] = gap + r
        return float(per_glint.mean())


def reflection_residual(
    cornea_3d: np.ndarray,
    camera: CameraModel,
    rig: LedRig,
    obs: FrameObservation,
    r: float = DEFAULT_RADIUS,
) -> float:
    """Mean distance (m) between each LED and the glint ray reflected off a
    sphere of radius ``r`` centered at ``cornea_3d`` (camera frame).

    Glint rays that miss the sphere contribute ``miss distance + r``.
    """
    return _GlintRays(camera, rig, obs).residual(np.asarray(cornea_3d, dtype=float), r)


def _descend_1d(f, t0: float, lo: float, hi: float, max_iter: int, step0: float = 1e-3):
    """Gradient descent on a scalar function with central-difference slopes
    and a backtracking (Armijo) line search, confined to ``[lo, hi]``."""
    t = min(max(t0, lo), hi)
    ft = f(t)
    step = step0
    it = 0
    while it < max_iter:
        it += 1
        h = max(1e-9, 1e-7 * abs(t))
        grad = (f(min(t + h, hi)) - f(max(t - h, lo))) / (min(t + h, hi) - max(t - h, lo))
        if grad == 0.0:
            break
        alpha = step / abs(grad)
        accepted = False
        for _ in range(60):
            t_new = min(max(t - alpha * grad, lo), hi)
            f_new = f(t_new)
            if f_new <= ft - 0.5 * abs(grad) * abs(t_new - t):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        dt = abs(t_new - t)
        df = ft - f_new
        t, ft = t_new, f_new
        step = 2.0 * alpha * abs(grad)
        if df < 1e-12 or dt < 1e-9:
            break
    return t, ft, it


def lift_cornea_3d(
    camera: CameraModel,
    rig: LedRig,
    obs: FrameObservation,
    r: float = DEFAULT_RADIUS,
    init_distance: float = DEFAULT_INIT_DISTANCE,
    cornea_2d: Optional[np.ndarray] = None,
    noise_floor: float = 1e-6,
    polish: bool = False,
) -> CorneaEstimate:
    """3D cornea center by 1D descent along the camera ray through the cornea
    2D estimate.

    Stops when the loss improves by less than 1e-12 m or the distance moves by
    less than 1e-9 m. If the 100-iteration cap is reached with a residual above
    ``10 * noise_floor`` the estimate is returned with ``converged=False``.
    With ``polish`` a short free 3D descent (same loss, at most 20 iterations)
    refines the result.

    Raises:
        InsufficientGlints: fewer than two present glints.
        SingularGeometry: LED-glint lines are (nearly) parallel.
    """
    if obs.n_glints < 2:
        raise InsufficientGlints(f"frame {obs.frame_id}: {obs.n_glints} glint(s), need 2")
    if cornea_2d is None:
        cornea_2d = solve_cornea_2d(camera, rig, obs)
    rays = _GlintRays(camera, rig, obs)
    axis = backproject(camera, cornea_2d).direction

    t, loss, iterations = _descend_1d(
        lambda s: rays.residual(s * axis, r), init_distance, T_MIN, T_MAX, MAX_ITERATIONS
    )
    center = t * axis
    if polish:
        center, loss = _polish_3d(rays, center, r, loss)

    converged = not (iterations >= MAX_ITERATIONS and loss > 10.0 * noise_floor)
    if not converged:
        log.warning("frame %s: cornea lift hit the iteration cap (residual %.3g m)", obs.frame_id, loss)
    return CorneaEstimate(
        cornea_2d=np.asarray(cornea_2d, dtype=float),
        cornea_3d=center,
        iterations=iterations,
        final_residual=loss,
        used_glints=rays.indices,
        converged=converged,
    )


def _polish_3d(rays: _GlintRays, center: np.ndarray, r: float, loss: float, max_iter: int = 20):
    x, fx = center.copy(), loss
    h = 1e-8
    step = 1e-5
    for _ in range(max_iter):
        grad = np.empty(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            grad[k] = (rays.residual(x + e, r) - rays.residual(x - e, r)) / (2 * h)
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            break
        alpha = step / gnorm
        for _ in range(40):
            x_new = x - alpha * grad
            f_new = rays.residual(x_new, r)
            if f_new <= fx - 0.5 * alpha * gnorm * gnorm:
                break
            alpha *= 0.5
        else:
            break
        if fx - f_new < 1e-12:
            x, fx = x_new, f_new
            break
        x, fx = x_new, f_new
        step = 2.0 * alpha * gnorm
    return x, fx

