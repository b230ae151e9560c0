"""Rendering and parsing of profile reports (text, json, csv)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import jsonschema

from .profiler import (
    TIMING_FIELDS,
    Census,
    OverheadBreakdown,
    ProfileReport,
    RegionDescriptor,
    RegionStats,
    ThreadTimings,
)

FORMATS = ("text", "json", "csv")

OVERHEAD_FIELDS = (
    "synch_s",
    "imbal_s",
    "limpar_s",
    "mgmt_s",
    "ovhds_s",
    "synch_pct",
    "imbal_pct",
    "limpar_pct",
    "mgmt_pct",
    "ovhds_pct",
)

_number = {"type": "number"}
_overheads_schema = {
    "type": "object",
    "required": list(OVERHEAD_FIELDS),
    "properties": {k: _number for k in OVERHEAD_FIELDS},
}
REPORT_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": [
        "team_size",
        "census",
        "program_wall_s",
        "parallel_coverage",
        "regions",
        "totals",
    ],
    "properties": {
        "team_size": {"type": "integer", "minimum": 0},
        "census": {
            "type": "object",
            "required": ["parallel_regions", "parallel_loops", "barriers"],
            "properties": {
                k: {"type": "integer", "minimum": 0}
                for k in ("parallel_regions", "parallel_loops", "barriers")
            },
        },
        "program_wall_s": {"type": "number", "minimum": 0},
        "parallel_coverage": {"type": "number", "minimum": 0, "maximum": 1},
        "regions": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "label", "wall_s", "threads", "overheads"],
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {
                        "enum": ["parallel", "parallel-loop", "barrier", "critical", "ordered"]
                    },
                    "label": {"type": "string"},
                    "parent": {"type": ["integer", "null"]},
                    "complete": {"type": "boolean"},
                    "wall_s": _number,
                    "threads": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["tid", *TIMING_FIELDS, "entry_count"],
                            "properties": {
                                "tid": {"type": "integer", "minimum": 0},
                                "entry_count": {"type": "integer", "minimum": 0},
                                **{k: _number for k in TIMING_FIELDS},
                            },
                        },
                    },
                    "overheads": _overheads_schema,
                },
            },
        },
        "totals": _overheads_schema,
    },
}


class ReportFormatError(ValueError):
    pass


def _overheads_dict(o: OverheadBreakdown) -> dict[str, float]:
    return {k: getattr(o, k) for k in OVERHEAD_FIELDS}


def report_to_dict(report: ProfileReport) -> dict[str, Any]:
    return {
        "team_size": report.team_size,
        "census": {
            "parallel_regions": report.census.parallel_regions,
            "parallel_loops": report.census.parallel_loops,
            "barriers": report.census.barriers,
        },
        "program_wall_s": report.program_wall_s,
        "parallel_coverage": report.parallel_coverage,
        "regions": [
            {
                "id": r.descriptor.region_id,
                "kind": r.descriptor.kind,
                "label": r.descriptor.label,
                "parent": r.descriptor.parent,
                "complete": r.complete,
                "wall_s": r.wall_s,
                "threads": [
                    {
                        "tid": tid,
                        **{k: getattr(t, k) for k in TIMING_FIELDS},
                        "entry_count": t.entry_count,
                    }
                    for tid, t in enumerate(r.per_thread)
                ],
                "overheads": _overheads_dict(r.overheads),
            }
            for r in report.regions
        ],
        "totals": _overheads_dict(report.totals),
    }


def report_from_dict(data: Any) -> ProfileReport:
    try:
        jsonschema.validate(data, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ReportFormatError(f"invalid report at {where}: {exc.message}") from None
    regions = []
    for r in data["regions"]:
        rows = sorted(r["threads"], key=lambda t: t["tid"])
        if [t["tid"] for t in rows] != list(range(len(rows))):
            raise ReportFormatError(f"region {r['id']}: thread ids are not 0..{len(rows) - 1}")
        regions.append(
            RegionStats(
                descriptor=RegionDescriptor(r["id"], r["kind"], r["label"], r.get("parent")),
                wall_s=r["wall_s"],
                per_thread=[
                    ThreadTimings(**{k: t[k] for k in TIMING_FIELDS}, entry_count=t["entry_count"])
                    for t in rows
                ],
                complete=r.get("complete", True),
                overheads=OverheadBreakdown(**r["overheads"]),
            )
        )
    return ProfileReport(
        team_size=data["team_size"],
        census=Census(**data["census"]),
        program_wall_s=data["program_wall_s"],
        parallel_coverage=data["parallel_coverage"],
        regions=regions,
        totals=OverheadBreakdown(**data["totals"]),
    )


def parse_report(raw: bytes | str) -> ProfileReport:
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ReportFormatError(f"not valid JSON: {exc}") from None
    return report_from_dict(data)


def load_report(path: str | Path) -> ProfileReport:
    return parse_report(Path(path).read_bytes())


def _ovh_line(o: OverheadBreakdown) -> str:
    parts = [
        (o.ovhds_s, o.ovhds_pct),
        (o.synch_s, o.synch_pct),
        (o.imbal_s, o.imbal_pct),
        (o.limpar_s, o.limpar_pct),
        (o.mgmt_s, o.mgmt_pct),
    ]
    cells = [f"{s:.4f} ({p:.2f})" for s, p in parts]
    return f"{cells[0]} = {cells[1]} + {cells[2]} + {cells[3]} + {cells[4]}"


_COLUMNS = ("body", "enterW", "exitBarW", "explBarW", "mgmt", "limpar")


def _render_text(report: ProfileReport) -> str:
    c = report.census
    out = []
    out.append("forkprof profile report")
    out.append("=" * 72)
    out.append(f"Threads:           {report.team_size}")
    out.append(f"Program wall:      {report.program_wall_s:.4f} sec")
    inside = report.parallel_coverage * report.program_wall_s
    out.append(
        f"Parallel coverage: {inside:.4f} sec ({report.parallel_coverage * 100:.2f}%)"
    )
    out.append(
        f"Census:            {c.parallel_regions} parallel regions, "
        f"{c.parallel_loops} parallel loops, {c.barriers} barriers"
    )
    for r in report.regions:
        d = r.descriptor
        parent = f"R{d.parent:05d}" if d.parent is not None else "-"
        status = "" if r.complete else "  INCOMPLETE"
        out.append("")
        out.append("-" * 72)
        out.append(
            f"R{d.region_id:05d} {d.kind:<13} {d.label!r}  parent {parent}  "
            f"wall {r.wall_s:.4f} sec{status}"
        )
        out.append(" TID " + "".join(f"{h:>10}" for h in _COLUMNS) + f"{'entries':>9}")
        for tid, t in enumerate(r.per_thread):
            vals = [getattr(t, k) for k in TIMING_FIELDS]
            out.append(f"{tid:>4} " + "".join(f"{v:>10.4f}" for v in vals) + f"{t.entry_count:>9}")
        sums = [sum(getattr(t, k) for t in r.per_thread) for k in TIMING_FIELDS]
        entries = sum(t.entry_count for t in r.per_thread)
        out.append(" SUM " + "".join(f"{v:>10.4f}" for v in sums) + f"{entries:>9}")
        out.append(" Ovhds (%) = Synch (%) + Imbal (%) + Limpar (%) + Mgmt (%)")
        out.append(" " + _ovh_line(r.overheads))
    out.append("")
    out.append("=" * 72)
    out.append("Overall overheads, sec (% of parallel CPU time)")
    out.append(" Ovhds (%) = Synch (%) + Imbal (%) + Limpar (%) + Mgmt (%)")
    out.append(" " + _ovh_line(report.totals))
    return "\n".join(out) + "\n"


def _render_csv(report: ProfileReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["region_id", "kind", "label", "parent", "complete", "wall_s", "tid", *TIMING_FIELDS, "entry_count"]
    )
    for r in report.regions:
        d = r.descriptor
        for tid, t in enumerate(r.per_thread):
            w.writerow(
                [
                    d.region_id,
                    d.kind,
                    d.label,
                    "" if d.parent is None else d.parent,
                    int(r.complete),
                    repr(r.wall_s),
                    tid,
                    *(repr(getattr(t, k)) for k in TIMING_FIELDS),
                    t.entry_count,
                ]
            )
    return buf.getvalue()


def emit_report(report: ProfileReport, fmt: str = "text") -> bytes:
    if fmt == "text":
        text = _render_text(report)
    elif fmt == "json":
        text = json.dumps(report_to_dict(report), indent=2) + "\n"
    elif fmt == "csv":
        text = _render_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")
    return text.encode("utf-8")
