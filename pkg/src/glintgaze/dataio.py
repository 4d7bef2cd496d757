"""Dataset CSV files.

One row per frame::

    subject_id, target_id, frame_id, target_x, target_y, target_z,
    g0_u, g0_v, g0_present, ... g3_u, g3_v, g3_present,
    pupil_u, pupil_v, pupil_present
    [, cornea_x, cornea_y, cornea_z, optical_x, optical_y, optical_z,
       visual_x, visual_y, visual_z]

Targets are device-frame meters, image coordinates are pixels, presence
flags are 0/1 and absent detections have empty coordinates. The optional
truth columns are camera-frame cornea center and axes. Floats are written
with their shortest round-trip representation.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .errors import ConfigError
from .simulator import FrameObservation, SimDataset

OBS_FIELDS = (
    ["subject_id", "target_id", "frame_id", "target_x", "target_y", "target_z"]
    + [f"g{i}_{k}" for i in range(4) for k in ("u", "v", "present")]
    + ["pupil_u", "pupil_v", "pupil_present"]
)
TRUTH_FIELDS = [f"{name}_{ax}" for name in ("cornea", "optical", "visual") for ax in "xyz"]


def _num(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


def observation_row(obs: FrameObservation) -> list[str]:
    row = [str(obs.subject_id), str(obs.target_id), str(obs.frame_id)]
    row += [repr(float(v)) for v in obs.target]
    for (u, v), present in zip(obs.glints, obs.glint_present):
        row += [_num(u), _num(v), "1" if present else "0"]
    row += [_num(obs.pupil[0]), _num(obs.pupil[1]), "1" if obs.pupil_present else "0"]
    return row


def dataset_csv(dataset: SimDataset, with_truth: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OBS_FIELDS + (TRUTH_FIELDS if with_truth else []))
    for rec in dataset:
        row = observation_row(rec.observation)
        if with_truth:
            pose = rec.truth.eye_pose
            for vec in (pose.cornea_center, pose.optical_axis, pose.visual_axis):
                row += [repr(float(v)) for v in vec]
        writer.writerow(row)
    return buf.getvalue()


def write_dataset(dataset: SimDataset, path: Union[str, Path], with_truth: bool = False) -> None:
    Path(path).write_text(dataset_csv(dataset, with_truth))


def _float(text: str) -> float:
    return float(text) if text.strip() else float("nan")


def parse_observations(lines: Iterable[str]) -> list[FrameObservation]:
    """Observations from dataset CSV text; truth columns are ignored."""
    reader = csv.DictReader(lines)
    missing = set(OBS_FIELDS) - set(reader.fieldnames or [])
    if missing:
        raise ConfigError(f"dataset is missing column(s): {', '.join(sorted(missing))}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        try:
            present = np.array([row[f"g{i}_present"].strip() == "1" for i in range(4)])
            glints = np.array([[_float(row[f"g{i}_u"]), _float(row[f"g{i}_v"])] for i in range(4)])
            glints[~present] = np.nan
            if np.any(np.isnan(glints[present])):
                raise ValueError("present glint without coordinates")
            pupil_present = row["pupil_present"].strip() == "1"
            pupil = np.array([_float(row["pupil_u"]), _float(row["pupil_v"])])
            if pupil_present and np.any(np.isnan(pupil)):
                raise ValueError("present pupil without coordinates")
            out.append(
                FrameObservation(
                    glints=glints,
                    glint_present=present,
                    pupil=pupil if pupil_present else np.full(2, np.nan),
                    pupil_present=pupil_present,
                    target=np.array([float(row[f"target_{a}"]) for a in "xyz"]),
                    subject_id=int(row["subject_id"]),
                    target_id=int(row["target_id"]),
                    frame_id=int(row["frame_id"]),
                )
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"dataset line {lineno}: {exc}") from exc
    return out


def read_observations(path: Union[str, Path]) -> list[FrameObservation]:
    try:
        with open(path, newline="") as fh:
            return parse_observations(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
