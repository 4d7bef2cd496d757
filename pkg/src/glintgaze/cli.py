"""Command line entry point.

    glintgaze simulate  --config scene.cfg --subjects 1 --frames 1 --seed 7 --out run/
    glintgaze solve     --config scene.cfg --dataset run/dataset.csv --out run/
    glintgaze calibrate --config scene.cfg --dataset run/dataset.csv --mapper dense --out run/
    glintgaze evaluate  --config scene.cfg --mapper dense --noise 0 --seed 7 --out run/
    glintgaze sweep     --config scene.cfg --sigmas 0,0.25,0.5,1 --seeds 20 --out run/

Exit codes: 0 success, 1 usage error, 2 data or geometry error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import DEFAULT_CONFIG, load_config
from .dataio import dataset_csv, read_observations
from .errors import GeometryError
from .evaluation import (
    ProtocolConfig,
    calibrate,
    estimate_frames,
    evaluate_observations,
    format_report,
    metrics_csv,
    noise_sweep,
    run_protocol,
)
from .mapper import TrainConfig, apply_mapper, load_mapper, save_mapper
from .scene import make_target_grid
from .simulator import NoiseModel, generate_dataset

SUBCOMMANDS = ("simulate", "solve", "calibrate", "evaluate", "sweep")

class UsageError(Exception):
    pass

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scene config file (defaults built in; see `--help`)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--pupil-mode", choices=("consistent", "physiological"))
    common.add_argument("--calibration-plane", type=int, default=1)
    common.add_argument("--mapper", choices=("poly", "dense", "none"), default="dense")
    common.add_argument("--noise", type=float, default=0.0, help="glint and pupil pixel sigma")
    common.add_argument("--dropout", type=float, default=0.0, help="per-glint dropout probability")
    common.add_argument("--frames", type=int, default=1, help="frames per target")
    common.add_argument("--subjects", type=int, default=1)
    common.add_argument("--epochs", type=int, default=TrainConfig().epochs, help="dense mapper epochs")

    parser = _Parser(
        prog="glintgaze",
        description="Glint-based gaze estimation on simulated eye data.",
        epilog="Scene config schema (INI, meters and degrees):\n\n" + DEFAULT_CONFIG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="write a simulated dataset CSV")
    p.add_argument("--with-truth", action="store_true", help="append ground-truth columns")

    p = sub.add_parser("solve", parents=[common], help="per-frame cornea/gaze estimates from a dataset CSV")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mapper-file", help="apply a saved mapper to the optical axes")

    p = sub.add_parser("calibrate", parents=[common], help="fit a mapper on the calibration plane")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="calibrate and test, write metrics")
    p.add_argument("--dataset", help="evaluate this dataset instead of simulating one")
    p.add_argument("--origin", choices=("test", "calibration"), default="test")
    p.add_argument("--per-target", action="store_true", help="average errors per target first")

    p = sub.add_parser("sweep", parents=[common], help="gaze error versus pixel noise")
    p.add_argument("--sigmas", default="0,0.25,0.5,1.0")
    p.add_argument("--seeds", type=int, default=1, help="seeds per noise level")
    return parser

def _setup(args):
    scene, phys = load_config(args.config)
    if args.pupil_mode:
        phys = replace(phys, pupil_mode=args.pupil_mode)
    noise = NoiseModel(args.noise, args.noise, args.dropout, args.seed)
    cfg = ProtocolConfig(
        calibration_plane=args.calibration_plane,
        frames_per_target=args.frames,
        noise=noise,
        mapper=args.mapper,
        seed=args.seed,
        cornea_radius=phys.cornea_radius,
        test_origin=getattr(args, "origin", "test"),
        per_target=getattr(args, "per_target", False),
        train=TrainConfig(epochs=args.epochs),
    )
    return scene, phys, cfg

def _write_manifest(out: Path, args) -> None:
    manifest = {
        "subcommand": args.command,
        "config": args.config,
        "seed": args.seed,
        "out": args.out,
        "version": __version__,
        "arguments": {k: v for k, v in sorted(vars(args).items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

def _vec(v) -> list[str]:
    return ["" if v is None else repr(float(x)) for x in (v if v is not None else [None] * 3)]

def _cmd_simulate(args, out: Path) -> None:
    scene, phys, cfg = _setup(args)
    data = generate_dataset(scene, [phys] * args.subjects, make_target_grid(scene.grid), args.frames, cfg.noise)
    (out / "dataset.csv").write_text(dataset_csv(data, with_truth=args.with_truth))
    print(f"wrote {len(data)} frames to {out / 'dataset.csv'}")

def _cmd_solve(args, out: Path) -> None:
    scene, phys, cfg = _setup(args)
    observations = read_observations(args.dataset)
    mapper = load_mapper(args.mapper_file) if args.mapper_file else None
    results = estimate_frames(scene, observations, cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["subject_id", "target_id", "frame_id", "status", "cornea_u", "cornea_v"]
        + [f"{n}_{a}" for n in ("cornea", "pupil", "optical", "gaze") for a in "xyz"]
        + ["iterations", "residual_m"]
    )
    for r in results:
        obs = r.observation
        axis = r.axis
        gaze = apply_mapper(mapper, axis.optical_axis) if (axis is not None and mapper is not None) else None
        c2 = ["", ""] if r.cornea_2d is None else [repr(float(x)) for x in r.cornea_2d]
        w.writerow(
            [obs.subject_id, obs.target_id, obs.frame_id, r.status]
            + c2
            + _vec(axis.cornea_3d if axis else None)
            + _vec(axis.pupil_3d if axis else None)
            + _vec(axis.optical_axis if axis else None)
            + _vec(gaze)
            + ([r.iterations, repr(r.residual)] if r.ok else ["", ""])
        )
    (out / "estimates.csv").write_text(buf.getvalue())
    failed = sum(not r.ok for r in results)
    print(f"solved {len(results) - failed}/{len(results)} frames -> {out / 'estimates.csv'}")

def _cmd_calibrate(args, out: Path) -> None:
    scene, phys, cfg = _setup(args)
    if cfg.mapper == "none":
        raise UsageError("calibrate needs --mapper poly or dense")
    observations = read_observations(args.dataset)
    results = estimate_frames(scene, observations, cfg)
    mapper, _ = calibrate(results, make_target_grid(scene.grid), cfg)
    save_mapper(mapper, out / "mapper.json")
    print(f"wrote {cfg.mapper} mapper to {out / 'mapper.json'}")

def _cmd_evaluate(args, out: Path) -> None:
    scene, phys, cfg = _setup(args)
    if args.dataset:
        result = evaluate_observations(scene, read_observations(args.dataset), cfg)
    else:
        result = run_protocol(scene, phys, cfg)
    (out / "metrics.csv").write_text(metrics_csv(result))
    report = format_report([(f"glints+{cfg.mapper}", result.summary)])
    report += f"evaluated {result.evaluated} test frames, dropped {result.dropped}\n"
    (out / "report.txt").write_text(report)
    print(report, end="")

def _cmd_sweep(args, out: Path) -> None:
    scene, phys, cfg = _setup(args)
    try:
        sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sigmas: {exc}") from exc
    if sigmas != sorted(sigmas):
        raise UsageError("--sigmas must be ascending")
    rows = noise_sweep(scene, phys, sigmas, cfg, n_seeds=args.seeds)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma_px", "mean_arcmin", "std_arcmin", "q1_arcmin", "q2_arcmin", "q3_arcmin", "n"])
    for row in rows:
        w.writerow([repr(row.sigma)] + [repr(v) for v in row.summary.row()] + [row.summary.n])
    (out / "sweep.csv").write_text(buf.getvalue())
    report = format_report([(f"sigma={row.sigma:g}px", row.summary) for row in rows])
    (out / "report.txt").write_text(report)
    print(report, end="")

COMMANDS = {
    "simulate": _cmd_simulate,
    "solve": _cmd_solve,
    "calibrate": _cmd_calibrate,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
}

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.frames < 1 or args.subjects < 1:
            raise UsageError("--frames and --subjects must be at least 1")
        if not 0.0 <= args.dropout <= 1.0 or args.noise < 0:
            raise UsageError("--dropout must be in [0, 1] and --noise non-negative")
        if not 0 <= args.calibration_plane <= 5:
            raise UsageError("--calibration-plane must be in [0, 5]")
    except UsageError as exc:
        parser.print_help(sys.stderr)
        print(exc, file=sys.stderr)
        return 1

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"glintgaze: {exc}", file=sys.stderr)
        return 1
    except GeometryError as exc:
        print(f"glintgaze: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    _write_manifest(out, args)
    return 0

if __name__ == "__main__":
    sys.exit(main())
