"""Deterministic report serialization: json, csv, text and figures."""
from __future__ import annotations

import json
import os

import numpy as np
import pytest

from condjump.report import AuditResult, RunReport, emit_report, fmt12, load_report, report_payload


def small_report():
    table = {
        "header": ["r", "phi"],
        "rows": [[0.1, 0.5], [0.2, 0.5000001], [0.4, np.nan]],
    }
    audit = AuditResult(
        name="acf",
        verdict="PASS",
        metrics={"phi_mean": 0.6168, "count": 3, "flag": True},
        tables={"radial": table},
        figures=[{"name": "phi", "kind": "lines", "table": "radial", "x": "r", "ys": ["phi"]}],
        note="radii contain a comma, like 0.1, 0.2",
    )
    return RunReport(
        name="demo",
        config={"name": "demo", "grid.cells": "64"},
        audits=[audit],
        solve={"h": 1.0 / 32.0, "residual": 3.2e-11},
        timing={"solve": 0.123},
        refinement=[{"h": 0.05, "cells": 40, "acf.phi_spread": 0.01}],
    )


def test_audit_result_verdict_validation():
    with pytest.raises(ValueError, match="verdict"):
        AuditResult(name="x", verdict="MAYBE")


def test_fmt12_scalars():
    assert fmt12(0.1 + 0.2) == "0.3"
    assert fmt12(np.pi) == "3.14159265359"
    assert fmt12(float("nan")) == "nan"
    assert fmt12(float("-inf")) == "-inf"
    assert fmt12(True) == "true"
    assert fmt12(7) == "7"
    assert fmt12("keep") == "keep"


def test_payload_excludes_timing_and_roundtrips(tmp_path):
    report = small_report()
    payload = report_payload(report)
    assert "timing" not in payload
    blob = json.dumps(payload, sort_keys=True)
    assert "NaN" not in blob  # non-finite values are serialized as strings
    paths = emit_report(report, str(tmp_path))
    loaded = load_report(str(tmp_path / "report.json"))
    assert report_payload(loaded) == payload
    assert any(p.endswith("timings.txt") for p in paths)


def test_emission_is_byte_stable(tmp_path):
    report = small_report()
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    emit_report(report, str(dir_a))
    report.timing = {"solve": 99.0}  # timing must not influence the payload
    emit_report(report, str(dir_b))
    for fname in ("report.json", "report.csv", "report.txt", "acf_radial.csv", "acf_phi.png"):
        assert (dir_a / fname).read_bytes() == (dir_b / fname).read_bytes(), fname
    timings = (dir_b / "timings.txt").read_text()
    assert "99" in timings


def test_csv_quotes_commas_and_text_lists_verdicts(tmp_path):
    report = small_report()
    emit_report(report, str(tmp_path), figures=False)
    csv_text = (tmp_path / "report.csv").read_text()
    assert csv_text.startswith("section,name,key,value")
    assert "0.1; 0.2" in csv_text  # note commas become semicolons
    txt = (tmp_path / "report.txt").read_text()
    assert txt.count("acf: PASS") == 1
    assert "refinement" in txt


def test_formats_are_validated(tmp_path):
    with pytest.raises(ValueError, match="format"):
        emit_report(small_report(), str(tmp_path), formats=("json", "xml"))


def test_unknown_figure_kind_rejected(tmp_path):
    report = small_report()
    report.audits[0].figures = [
        {"name": "phi", "kind": "surface", "table": "radial", "x": "r", "ys": ["phi"]}
    ]
    with pytest.raises(ValueError, match="figure kind"):
        emit_report(report, str(tmp_path))


def test_load_report_missing_file(tmp_path):
    with pytest.raises(OSError, match="report"):
        load_report(str(tmp_path / "nowhere" / "report.json"))


def test_figures_render_to_png(tmp_path):
    emit_report(small_report(), str(tmp_path))
    png = tmp_path / "acf_phi.png"
    assert png.exists()
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
