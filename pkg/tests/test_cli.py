import csv
import json

import pytest

from glintgaze.cli import main


def _run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_simulate_counts(tmp_path):
    assert _run(tmp_path, "simulate", "--subjects", "2", "--frames", "3", "--with-truth") == 0
    rows = list(csv.DictReader(open(tmp_path / "dataset.csv")))
    assert len(rows) == 2 * 54 * 3
    assert "cornea_x" in rows[0]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate" and manifest["seed"] == 0


def test_unknown_flag_exits_1_without_output(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--bogus", "--out", str(out)]) == 1
    assert not out.exists()
    assert "usage" in capsys.readouterr().err


def test_bad_values_exit_1(tmp_path):
    assert _run(tmp_path, "simulate", "--dropout", "2") == 1
    assert _run(tmp_path, "sweep", "--sigmas", "1,0") == 1
    assert not (tmp_path / "manifest.json").exists()


def test_geometry_error_exits_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[camera]\nfx = -1\n")
    assert _run(tmp_path, "simulate", "--config", str(cfg)) == 2


def test_solve_calibrate_pipeline(tmp_path):
    assert _run(tmp_path, "simulate", "--pupil-mode", "consistent") == 0
    ds = str(tmp_path / "dataset.csv")
    assert _run(tmp_path, "calibrate", "--dataset", ds, "--mapper", "poly", "--pupil-mode", "consistent") == 0
    assert _run(tmp_path, "solve", "--dataset", ds, "--mapper-file", str(tmp_path / "mapper.json")) == 0
    rows = list(csv.DictReader(open(tmp_path / "estimates.csv")))
    assert len(rows) == 54 and all(r["status"] == "ok" for r in rows)
    assert all(r["gaze_x"] for r in rows)


def test_evaluate_from_dataset(tmp_path):
    assert _run(tmp_path, "simulate", "--pupil-mode", "consistent", "--seed", "7") == 0
    ds = str(tmp_path / "dataset.csv")
    assert _run(tmp_path, "evaluate", "--dataset", ds, "--mapper", "poly") == 0
    text = (tmp_path / "report.txt").read_text()
    assert "Mean AE" in text and "evaluated 45 test frames" in text


def test_evaluate_dense_example(tmp_path):
    assert _run(tmp_path, "evaluate", "--mapper", "dense", "--noise", "0", "--seed", "7", "--pupil-mode", "consistent") == 0
    footer = dict(line[2:].split("=") for line in (tmp_path / "metrics.csv").read_text().splitlines() if line.startswith("# "))
    assert float(footer["mean_arcmin"]) < 10.0


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--noise", "0.5", "--dropout", "0.1", "--seed", "11", "--out", str(out)]) == 0
        assert main(["evaluate", "--mapper", "poly", "--noise", "0.5", "--seed", "11", "--out", str(out)]) == 0
    for name in ("dataset.csv", "metrics.csv", "report.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_outputs(tmp_path):
    assert _run(tmp_path, "sweep", "--mapper", "none", "--sigmas", "0,1", "--seeds", "2") == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [r["sigma_px"] for r in rows] == ["0.0", "1.0"]
    assert int(rows[0]["n"]) == 90


def test_help_includes_config_schema(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "[camera]" in capsys.readouterr().out
