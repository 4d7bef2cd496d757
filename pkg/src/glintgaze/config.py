"""Scene configuration files.

INI-style text read with :mod:`configparser`. Lengths are in meters and
angles in degrees; every key is optional and falls back to the defaults
below::

    [camera]
    fx = 600
    fy = 600
    width = 640
    height = 480
    # cx, cy default to the image center
    eye_distance = 0.035     ; camera center to eyeball center
    pitch = 30               ; camera elevation below the display axis

    [leds]
    width = 0.040            ; LED rectangle, centered on the display axis
    height = 0.030
    depth = 0.025            ; device z of the LED plane
    # or explicit device-frame positions: led0 = x, y, z  (all four)

    [eye]
    cornea_radius = 0.0078
    cornea_offset = 0.0053   ; eyeball center -> cornea center
    pupil_mode = physiological   ; or consistent
    pupil_offset = 0.0042    ; cornea center -> pupil center
    kappa_h = 5.0
    kappa_v = 1.5

    [grid]
    depths = 0.5, 0.75, 1.0, 1.5, 2.0, 3.0
    half_extent_odd = 10
    half_extent_even = 7
"""

from __future__ import annotations

import configparser
import math
import textwrap
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .scene import (
    CameraModel,
    EyePhysiology,
    GridConfig,
    LedRig,
    Scene,
    default_camera,
    rectangular_rig,
)

DEFAULT_CONFIG = textwrap.dedent(__doc__.split("::", 1)[1]).lstrip("\n")

_KNOWN = {
    "camera": {"fx", "fy", "cx", "cy", "width", "height", "eye_distance", "pitch"},
    "leds": {"width", "height", "depth", "led0", "led1", "led2", "led3"},
    "eye": {"cornea_radius", "cornea_offset", "pupil_mode", "pupil_offset", "kappa_h", "kappa_v"},
    "grid": {"depths", "half_extent_odd", "half_extent_even"},
}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def parse_config(text: str) -> tuple[Scene, EyePhysiology]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",), comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(parser[section]) - _KNOWN[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")

    def get(section: str, key: str, default):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return type(default)(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc

    try:
        width = get("camera", "width", 640)
        height = get("camera", "height", 480)
        cam = default_camera(
            fx=get("camera", "fx", 600.0),
            fy=get("camera", "fy", 600.0),
            eye_distance=get("camera", "eye_distance", 0.035),
            pitch_deg=get("camera", "pitch", 30.0),
            width=width,
            height=height,
        )
        if parser.has_option("camera", "cx") or parser.has_option("camera", "cy"):
            cam = CameraModel(
                cam.fx,
                cam.fy,
                get("camera", "cx", width / 2.0),
                get("camera", "cy", height / 2.0),
                width,
                height,
                cam.rotation,
                cam.translation,
            )

        explicit = [f"led{i}" for i in range(4) if parser.has_option("leds", f"led{i}")]
        if explicit:
            if len(explicit) != 4:
                raise ConfigError("explicit LED positions need all of led0..led3")
            leds = [np.array(_floats(parser.get("leds", k))) for k in explicit]
            rig = LedRig(np.array([cam.to_camera(p) for p in leds]))
        else:
            rig = rectangular_rig(
                cam,
                width=get("leds", "width", 0.040),
                height=get("leds", "height", 0.030),
                depth=get("leds", "depth", 0.025),
            )

        grid = GridConfig(
            depths=tuple(_floats(parser.get("grid", "depths"))) if parser.has_option("grid", "depths") else GridConfig().depths,
            half_extent_odd=get("grid", "half_extent_odd", 10.0),
            half_extent_even=get("grid", "half_extent_even", 7.0),
        )
        if len(grid.depths) != 6:
            raise ConfigError("the target grid needs exactly 6 depth planes")

        phys = EyePhysiology(
            eyeball_center=cam.to_camera(np.zeros(3)),
            cornea_radius=get("eye", "cornea_radius", 0.0078),
            cornea_offset=get("eye", "cornea_offset", 0.0053),
            pupil_mode=get("eye", "pupil_mode", "physiological"),
            pupil_offset=get("eye", "pupil_offset", 0.0042),
            kappa=(math.radians(get("eye", "kappa_h", 5.0)), math.radians(get("eye", "kappa_v", 1.5))),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return Scene(camera=cam, rig=rig, grid=grid), phys


def load_config(path: Optional[Union[str, Path]] = None) -> tuple[Scene, EyePhysiology]:
    """Scene and subject physiology from ``path`` (built-in defaults if ``None``)."""
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
