"""Run reports: structured audit results with deterministic serialization.

A RunReport collects the config echo, one AuditResult per configured audit
(each carrying a verdict, scalar metrics, optional data tables and figure
directives), solver diagnostics, wall-clock timings and an optional grid
refinement table.

emit_report writes report.json / report.csv / report.txt plus one CSV file
per data table and one PNG per figure directive.  All numbers are rendered
with 12 significant digits and keys are sorted, so emitting the same report
twice produces byte-identical files.  Timings are inherently run-dependent
and therefore go to a separate timings.txt sidecar instead of the report
payload.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field as dataclass_field


@dataclass
class AuditResult:
    """Outcome of one audit: verdict, metrics, tables and figure directives."""

    name: str
    verdict: str
    metrics: dict = dataclass_field(default_factory=dict)
    tables: dict = dataclass_field(default_factory=dict)
    figures: list = dataclass_field(default_factory=list)
    note: str = ""

    def __post_init__(self):
        if self.verdict not in ("PASS", "FAIL", "NA"):
            raise ValueError("verdict must be PASS, FAIL or NA, got %r" % self.verdict)


@dataclass
class RunReport:
    """One experiment run: config echo, audits, diagnostics and timings."""

    name: str
    config: dict
    audits: list
    solve: dict = dataclass_field(default_factory=dict)
    timing: dict = dataclass_field(default_factory=dict)
    refinement: list = dataclass_field(default_factory=list)

    def failed(self) -> bool:
        return any(a.verdict == "FAIL" for a in self.audits)

    def verdict_lines(self) -> list:
        return ["%s: %s" % (a.name, a.verdict) for a in self.audits]


def fmt12(value) -> str:
    """Format a scalar with 12 significant digits; strings pass through."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int,)):
        return str(value)
    x = float(value)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.12g" % x


def _json_value(value):
    if isinstance(value, (str, bool, int)):
        return value
    x = float(value)
    if math.isnan(x) or math.isinf(x):
        return fmt12(x)
    return float("%.12g" % x)


def _json_table(table: dict) -> dict:
    return {
        "header": list(table["header"]),
        "rows": [[_json_value(v) for v in row] for row in table["rows"]],
    }


def report_payload(report: RunReport) -> dict:
    """JSON-safe payload; excludes timings to keep bytes reproducible."""
    return {
        "name": report.name,
        "config": {k: str(v) for k, v in report.config.items()},
        "solve": {k: _json_value(v) for k, v in report.solve.items()},
        "audits": [
            {
                "name": a.name,
                "verdict": a.verdict,
                "note": a.note,
                "metrics": {k: _json_value(v) for k, v in a.metrics.items()},
                "tables": {k: _json_table(t) for k, t in a.tables.items()},
                "figures": [dict(f) for f in a.figures],
            }
            for a in report.audits
        ],
        "refinement": [
            {k: _json_value(v) for k, v in row.items()} for row in report.refinement
        ],
    }


def load_report(path: str) -> RunReport:
    """Rebuild a RunReport from a previously written report.json."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise OSError("cannot read report %s: %s" % (path, exc)) from exc
    audits = [
        AuditResult(
            name=a["name"],
            verdict=a["verdict"],
            metrics=a.get("metrics", {}),
            tables=a.get("tables", {}),
            figures=a.get("figures", []),
            note=a.get("note", ""),
        )
        for a in payload.get("audits", [])
    ]
    return RunReport(
        name=payload["name"],
        config=payload.get("config", {}),
        audits=audits,
        solve=payload.get("solve", {}),
        refinement=payload.get("refinement", []),
    )


def _write_text(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError("cannot write report file %s: %s" % (path, exc)) from exc


def _csv_lines(report: RunReport) -> str:
    lines = ["section,name,key,value"]
    for key in sorted(report.config):
        lines.append("config,,%s,%s" % (key, report.config[key]))
    for key in sorted(report.solve):
        lines.append("solve,,%s,%s" % (key, fmt12(report.solve[key])))
    for a in report.audits:
        lines.append("audit,%s,verdict,%s" % (a.name, a.verdict))
        for key in sorted(a.metrics):
            lines.append("audit,%s,%s,%s" % (a.name, key, fmt12(a.metrics[key])))
        if a.note:
            lines.append("audit,%s,note,%s" % (a.name, a.note.replace(",", ";")))
    for row in report.refinement:
        tag = "h=%s" % fmt12(row.get("h", float("nan")))
        for key in sorted(row):
            if key == "h":
                continue
            lines.append("refinement,%s,%s,%s" % (tag, key, fmt12(row[key])))
    return "\n".join(lines) + "\n"


def _text_lines(report: RunReport) -> str:
    lines = ["report: %s" % report.name, "", "config:"]
    for key in sorted(report.config):
        lines.append("  %s = %s" % (key, report.config[key]))
    if report.solve:
        lines.append("")
        lines.append("solve:")
        for key in sorted(report.solve):
            lines.append("  %s = %s" % (key, fmt12(report.solve[key])))
    lines.append("")
    lines.append("audits:")
    if not report.audits:
        lines.append("  (none)")
    for a in report.audits:
        lines.append("  %s: %s" % (a.name, a.verdict))
        for key in sorted(a.metrics):
            lines.append("    %s = %s" % (key, fmt12(a.metrics[key])))
        if a.note:
            lines.append("    note: %s" % a.note)
    if report.refinement:
        lines.append("")
        lines.append("refinement:")
        keys = sorted({k for row in report.refinement for k in row if k != "h"})
        lines.append("  " + "  ".join(["h"] + keys))
        for row in report.refinement:
            vals = [fmt12(row.get("h", float("nan")))]
            vals += [fmt12(row[k]) if k in row else "-" for k in keys]
            lines.append("  " + "  ".join(vals))
    return "\n".join(lines) + "\n"


def _table_csv(table: dict) -> str:
    lines = [",".join(table["header"])]
    for row in table["rows"]:
        lines.append(",".join(fmt12(v) for v in row))
    return "\n".join(lines) + "\n"


def _column(table: dict, name: str):
    idx = list(table["header"]).index(name)
    return [float(row[idx]) for row in table["rows"]]


def _render_figures(report: RunReport, outdir: str) -> list:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for a in report.audits:
        for spec in a.figures:
            table = a.tables.get(spec.get("table", ""))
            if table is None or not table["rows"]:
                continue
            fig, ax = plt.subplots(figsize=(5.0, 3.75))
            kind = spec.get("kind", "lines")
            if kind == "lines":
                x = _column(table, spec["x"])
                for yname in spec["ys"]:
                    ax.plot(x, _column(table, yname), marker=".", label=yname)
                if spec.get("logy"):
                    ax.set_yscale("log")
                ax.set_xlabel(spec.get("xlabel", spec["x"]))
                ax.set_ylabel(spec.get("ylabel", ""))
                ax.legend(fontsize=8)
            elif kind == "polylines":
                header = list(table["header"])
                if len(header) != 3:
                    plt.close(fig)
                    continue
                seg = _column(table, header[0])
                xs = _column(table, header[1])
                ys = _column(table, header[2])
                start = 0
                for i in range(1, len(seg) + 1):
                    if i == len(seg) or seg[i] != seg[start]:
                        ax.plot(xs[start:i], ys[start:i], color="tab:blue", lw=1.0)
                        start = i
                ax.set_aspect("equal")
                ax.set_xlabel(header[1])
                ax.set_ylabel(header[2])
            else:
                plt.close(fig)
                raise ValueError("unknown figure kind %r" % kind)
            ax.set_title("%s: %s" % (a.name, spec.get("name", kind)), fontsize=9)
            fig.tight_layout()
            path = os.path.join(outdir, "%s_%s.png" % (a.name, spec.get("name", kind)))
            try:
                fig.savefig(path, dpi=150, metadata={"Software": None})
            except OSError as exc:
                raise OSError("cannot write figure %s: %s" % (path, exc)) from exc
            finally:
                plt.close(fig)
            written.append(path)
    return written


def emit_report(
    report: RunReport,
    outdir: str,
    formats=("json", "csv", "text"),
    figures: bool = True,
) -> list:
    """Write the report in the requested formats; returns written paths.

    Formats must be a subset of {json, csv, text}.  The csv format also
    writes each audit data table to its own <audit>_<table>.csv file.
    Figures are rendered to PNG from the stored tables.  Timings go to
    timings.txt, which is the only non-reproducible output.
    """
    unknown = set(formats) - {"json", "csv", "text"}
    if unknown:
        raise ValueError("unknown report formats: %s" % ", ".join(sorted(unknown)))
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise OSError("cannot create output directory %s: %s" % (outdir, exc)) from exc
    written = []
    if "json" in formats:
        path = os.path.join(outdir, "report.json")
        payload = report_payload(report)
        _write_text(path, json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n")
        written.append(path)
    if "csv" in formats:
        path = os.path.join(outdir, "report.csv")
        _write_text(path, _csv_lines(report))
        written.append(path)
        for a in report.audits:
            for tname in sorted(a.tables):
                tpath = os.path.join(outdir, "%s_%s.csv" % (a.name, tname))
                _write_text(tpath, _table_csv(a.tables[tname]))
                written.append(tpath)
    if "text" in formats:
        path = os.path.join(outdir, "report.txt")
        _write_text(path, _text_lines(report))
        written.append(path)
    if report.timing:
        tpath = os.path.join(outdir, "timings.txt")
        lines = ["%s: %.3f s" % (k, v) for k, v in report.timing.items()]
        _write_text(tpath, "\n".join(lines) + "\n")
        written.append(tpath)
    if figures:
        written.extend(_render_figures(report, outdir))
    return written
