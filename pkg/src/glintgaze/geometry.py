"""Small 2D/3D geometry primitives.

Points and directions are plain ``numpy`` arrays of shape ``(3,)`` (3D, meters)
or ``(2,)`` (image plane, pixels). Directions are expected to be unit length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientLines, SingularGeometry

# Lines whose normal-equation matrix is worse conditioned than this are
# treated as parallel.
MAX_CONDITION = 1e8


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Unsigned angle in radians, stable for nearly parallel vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b)))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))
        object.__setattr__(self, "direction", normalize(self.direction))

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Line2:
    """Infinite image-plane line through two distinct pixel points."""

    point_a: np.ndarray
    point_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.point_a, dtype=float)
        b = np.asarray(self.point_b, dtype=float)
        if np.linalg.norm(b - a) <= 1e-9:
            raise ValueError("Line2 needs two distinct points")
        object.__setattr__(self, "point_a", a)
        object.__setattr__(self, "point_b", b)

    @property
    def direction(self) -> np.ndarray:
        d = self.point_b - self.point_a
        return d / np.linalg.norm(d)


def reflect_direction(incoming: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Mirror ``incoming`` about the plane with unit ``normal``: d - 2(d.n)n."""
    d = np.asarray(incoming, dtype=float)
    n = np.asarray(normal, dtype=float)
    return d - 2.0 * np.dot(d, n) * n


def ray_sphere_intersect(ray: Ray, sphere: Sphere) -> Optional[float]:
    """Ray parameter of the nearest forward hit, or ``None`` on a miss."""
    oc = ray.origin - sphere.center
    b = float(np.dot(oc, ray.direction))
    c = float(np.dot(oc, oc)) - sphere.radius**2
    disc = b * b - c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t_near = -b - root
    t_far = -b + root
    if t_near >= 0.0:
        return t_near
    if t_far >= 0.0:
        return t_far
    return None


def point_to_line3_distance(p: np.ndarray, origin: np.ndarray, direction: np.ndarray) -> float:
    """Perpendicular distance from ``p`` to the infinite line ``origin + s*direction``."""
    d = normalize(direction)
    w = np.asarray(p, dtype=float) - np.asarray(origin, dtype=float)
    return float(np.linalg.norm(w - np.dot(w, d) * d))


def point_to_line2_distance(p: np.ndarray, line: Line2) -> float:
    a = line.point_a
    e = line.point_b - a
    w = np.asarray(p, dtype=float) - a
    return abs(e[0] * w[1] - e[1] * w[0]) / math.hypot(e[0], e[1])


def intersect_lines2_lsq(lines: Sequence[Line2]) -> tuple[np.ndarray, float]:
    """Point minimizing the summed squared distance to ``lines``.

    Solves the 2x2 normal equations ``M p = q`` with
    ``M = sum(I - d d^T)`` and ``q = sum((I - d d^T) a)``.

    Returns:
        ``(point, condition_number_of_M)``.

    Raises:
        InsufficientLines: fewer than two lines.
        SingularGeometry: lines (nearly) parallel.
    """
    if len(lines) < 2:
        raise InsufficientLines(f"need at least 2 lines, got {len(lines)}")
    m = np.zeros((2, 2))
    q = np.zeros(2)
    eye = np.eye(2)
    for line in lines:
        d = line.direction
        proj = eye - np.outer(d, d)
        m += proj
        q += proj @ line.point_a
    cond = float(np.linalg.cond(m))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularGeometry(f"glint-LED lines nearly parallel (cond={cond:.3g})")
    return np.linalg.solve(m, q), cond
