"""End-to-end tests for the command line driver."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from condjump import cli
from condjump.cli import main

MINI = """
name = mini
grid.dim = 2
grid.cells = 64
problem.aplus = constant:2.0
problem.aminus = constant:1.0
problem.boundary = twoplane:beta=1.0,nu=1:0
problem.manufactured = true
audits = perimeter,classify
audit.classify.points = 0:0
audit.classify.expected = Nondegenerate
audit.classify.threshold_factor = 0.25
"""


def _write_cfg(tmp_path, text, name="mini.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_solve_writes_reports_and_field(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI)
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out)])
    assert rc == 0
    for fname in ("report.json", "report.csv", "report.txt", "timings.txt", "field.txt"):
        assert (out / fname).is_file(), fname
    lines = capsys.readouterr().out.strip().splitlines()
    assert any("perimeter" in ln and "PASS" in ln for ln in lines)
    assert any("classify" in ln and "PASS" in ln for ln in lines)
    payload = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert payload["name"] == "mini"
    assert sorted(a["name"] for a in payload["audits"]) == ["classify", "perimeter"]


def test_exit_two_on_missing_config(tmp_path, capsys):
    rc = main(["solve", "--config", str(tmp_path / "nope.cfg")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_exit_two_on_bad_dimension(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI.replace("grid.dim = 2", "grid.dim = 5"))
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_exit_two_on_unknown_audit(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI.replace("perimeter,classify", "perimeter,spectral"))
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "out")])
    assert rc == 2
    assert "unknown audit" in capsys.readouterr().err


def test_exit_one_on_failed_audit(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI.replace("expected = Nondegenerate", "expected = Degenerate"))
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out)])
    assert rc == 1
    assert "classify: FAIL" in capsys.readouterr().out
    assert (out / "report.json").is_file()


RANDOM_MU = """
name = randmu
grid.dim = 2
grid.cells = 64
problem.aplus = constant:2.0
problem.aminus = constant:1.0
problem.boundary = twoplane:beta=1.0,nu=1:0
problem.manufactured = true
audits = mu
audit.mu.mode = random
audit.mu.count = 12
"""


def test_seeded_runs_are_reproducible(tmp_path):
    cfg = _write_cfg(tmp_path, RANDOM_MU, name="randmu.cfg")
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        rc = main(["solve", "--config", cfg, "--out", str(out), "--seed", "7"])
        assert rc == 0
        blobs.append((out / "report.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_different_seeds_differ(tmp_path):
    cfg = _write_cfg(tmp_path, RANDOM_MU, name="randmu.cfg")
    blobs = []
    for run, seed in (("a", "7"), ("b", "8")):
        out = tmp_path / run
        rc = main(["solve", "--config", cfg, "--out", str(out), "--seed", seed])
        assert rc == 0
        blobs.append((out / "report.json").read_bytes())
    assert blobs[0] != blobs[1]


def test_grid_sweep_rows(tmp_path):
    cfg = _write_cfg(tmp_path, MINI.replace("perimeter,classify", "perimeter"))
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out), "--grid-sweep", "32,1/32"])
    assert rc == 0
    payload = json.loads((out / "report.json").read_text(encoding="utf-8"))
    rows = payload["refinement"]
    assert [row["cells"] for row in rows] == [32, 64]
    np.testing.assert_allclose([row["h"] for row in rows], [1.0 / 16.0, 1.0 / 32.0])
    for row in rows:
        assert "perimeter.perimeter" in row
    # the circle-free two-plane interface is a diameter of the square domain
    np.testing.assert_allclose([row["perimeter.perimeter"] for row in rows], 2.0, rtol=1e-6)


def test_report_reemission_is_byte_identical(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI)
    first = tmp_path / "first"
    assert main(["solve", "--config", cfg, "--out", str(first)]) == 0
    second = tmp_path / "second"
    rc = main(["report", "--config", str(first / "report.json"), "--out", str(second)])
    assert rc == 0
    for fname in ("report.json", "report.csv", "report.txt"):
        assert (second / fname).read_bytes() == (first / fname).read_bytes(), fname
    assert "classify" in capsys.readouterr().out


def test_report_subcommand_missing_file(tmp_path, capsys):
    rc = main(["report", "--config", str(tmp_path / "absent.json")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_suite_runs_each_packaged_config(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(cli, "_packaged_configs", lambda: [("mini.cfg", MINI)])
    out_root = tmp_path / "runs"
    rc = main(["suite", "--out", str(out_root)])
    assert rc == 0
    assert (out_root / "mini" / "report.json").is_file()
    assert "mini: classify: PASS" in capsys.readouterr().out


def test_packaged_configs_all_load():
    entries = cli._packaged_configs()
    assert len(entries) >= 6
    assert entries == sorted(entries, key=lambda item: item[0])
    from condjump.config import load_config

    for fname, text in entries:
        cfg = load_config(text)
        assert cfg.name
        assert cfg.audits


def test_subcommand_audit_selection(tmp_path):
    cfg = _write_cfg(tmp_path, MINI)
    out = tmp_path / "out"
    rc = main(["fb", "--config", cfg, "--out", str(out)])
    payload = json.loads((out / "report.json").read_text(encoding="utf-8"))
    names = [a["name"] for a in payload["audits"]]
    assert names == ["mu", "flux", "classify", "lipschitz", "perimeter"]
    assert rc in (0, 1)


def test_empty_grid_sweep_rejected(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MINI)
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path / "o"), "--grid-sweep", ", "])
    assert rc == 2
    assert "empty grid sweep" in capsys.readouterr().err
