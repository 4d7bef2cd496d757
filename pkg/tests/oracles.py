"""Brute-force reference solutions used by the tests.

Nothing here calls the solvers under test; each oracle recomputes its
quantity from first principles by exhaustive sampling.
"""

from functools import lru_cache

import numpy as np


_CHUNK = 1 << 14


@lru_cache(maxsize=2)
def _circle(samples):
    # the coarse pass only has to pick the right cell, so single precision
    # is enough; the local refinement below runs in double precision
    theta = np.linspace(-np.pi, np.pi, samples, endpoint=False)
    return theta, np.cos(theta).astype(np.float32), np.sin(theta).astype(np.float32)


def _residual(nx, ny, radius, a, lx, ly):
    """|reflect(dir(L->G), n) - dir(G->O)| on the circle, in plane coordinates
    with the sphere center at the origin and the camera at ``(a, 0)``.
    Points whose normal does not face both camera and LED get ``inf``."""
    gx, gy = radius * nx, radius * ny
    ix, iy = gx - lx, gy - ly
    inorm = np.sqrt(ix * ix + iy * iy)
    ix /= inorm
    iy /= inorm
    dot = ix * nx + iy * ny
    ox, oy = a - gx, -gy
    onorm = np.sqrt(ox * ox + oy * oy)
    ox /= onorm
    oy /= onorm
    ex = ix - 2 * dot * nx - ox
    ey = iy - 2 * dot * ny - oy
    res = np.sqrt(ex * ex + ey * ey)
    res[(nx * ox + ny * oy <= 0) | (dot >= 0)] = np.inf
    return res


def random_reflection_config(rng):
    """Camera at the origin, a cornea-sized sphere in front of it, and an LED
    outside the sphere placed so that a glint exists."""
    while True:
        direction = rng.normal(size=3)
        direction[2] = abs(direction[2]) + 2.0
        direction /= np.linalg.norm(direction)
        center = direction * rng.uniform(0.02, 0.06)
        radius = rng.uniform(0.006, 0.009)
        led = rng.uniform([-0.04, -0.04, -0.01], [0.04, 0.04, 0.03])
        to_o = -center / np.linalg.norm(center)
        to_l = (led - center) / np.linalg.norm(led - center)
        dist_o, dist_l = np.linalg.norm(center), np.linalg.norm(led - center)
        if dist_l < radius + 2e-3:
            continue
        # a glint exists only if some surface point sees both camera and LED:
        # the two visible caps (half-angles acos(r/d)) must overlap
        separation = np.arccos(np.clip(np.dot(to_o, to_l), -1.0, 1.0))
        if separation < np.arccos(radius / dist_o) + np.arccos(radius / dist_l) - 1e-3:
            return np.zeros(3), led, center, radius


def theta_scan(camera, led, center, radius, samples=1_000_000):
    """Reflection point found by scanning the full circle in the plane of
    camera, LED and sphere center.

    Returns ``(point, theta, basis_u, basis_v)`` with ``theta`` measured from
    ``basis_u`` (toward the camera). Only points whose outward normal faces
    both camera and LED are eligible.
    """
    u = camera - center
    u /= np.linalg.norm(u)
    w = led - center
    v = w - np.dot(w, u) * u
    v /= np.linalg.norm(v)
    a = np.linalg.norm(camera - center)
    lx, ly = np.dot(w, u), np.dot(w, v)

    theta, nx, ny = _circle(samples)
    args = [np.float32(x) for x in (radius, a, lx, ly)]
    res = np.concatenate([_residual(nx[s : s + _CHUNK], ny[s : s + _CHUNK], *args) for s in range(0, samples, _CHUNK)])
    k = int(np.argmin(res))
    if not np.isfinite(res[k]):
        raise ValueError("no surface point faces both camera and LED")
    # refine inside the winning cell with a second, local scan
    step = 2 * np.pi / samples
    local = np.linspace(theta[k] - step, theta[k] + step, 2001)
    lres = _residual(np.cos(local), np.sin(local), radius, a, lx, ly)
    best = float(local[int(np.argmin(lres))])
    point = center + radius * (np.cos(best) * u + np.sin(best) * v)
    return point, best, u, v


def arc_angle(point, center, u, v):
    d = point - center
    return float(np.arctan2(np.dot(d, v), np.dot(d, u)))


def t_scan(loss, t_lo, t_hi, samples=100_000, rounds=3):
    """Minimizer of a 1D loss by nested uniform scans."""
    lo, hi = t_lo, t_hi
    best = lo
    for _ in range(rounds):
        ts = np.linspace(lo, hi, samples)
        vals = np.array([loss(t) for t in ts])
        k = int(np.argmin(vals))
        best = float(ts[k])
        step = (hi - lo) / (samples - 1)
        lo, hi = max(t_lo, best - 2 * step), min(t_hi, best + 2 * step)
    return best


def reflection_loss_along_ray(ts, axis, glint_dirs, leds, radius):
    """Mean LED-to-reflected-ray distance for sphere centers ``t * axis``,
    evaluated for every ``t`` at once. Rays that miss count as
    ``miss distance + radius``; camera at the origin."""
    ts = np.asarray(ts, dtype=float)[:, None]
    total = np.zeros(ts.shape[0])
    for d, led in zip(glint_dirs, leds):
        d = d / np.linalg.norm(d)
        cos_a = float(np.dot(d, axis))
        # ray origin at 0; |t d - s axis|^2 = r^2 solved for t
        b = ts[:, 0] * cos_a
        disc = b * b - (ts[:, 0] ** 2 - radius**2)
        root = np.sqrt(np.maximum(disc, 0.0))
        near = b - root
        tt = np.where(near >= 0, near, b + root)
        g = tt[:, None] * d
        n = (g - ts * axis) / radius
        refl = d - 2 * (n @ d)[:, None] * n
        w = led - g
        dist = np.linalg.norm(w - np.sum(w * refl, axis=1)[:, None] * refl, axis=1)
        miss_gap = ts[:, 0] * np.sqrt(max(0.0, 1 - cos_a**2))
        total += np.where(disc >= 0, dist, miss_gap)
    return total / len(leds)
