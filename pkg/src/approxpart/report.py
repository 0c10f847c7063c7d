"""Analysis reports: a text form that reads like a results table row, and a
stable JSON form.

JSON schema (``"schema": "approxpart.report/1"``)::

    {
      "schema": "approxpart.report/1",
      "cache": {"line_size": int, "sets": int, "ways": int},
      "total_accesses": int, "total_misses": int,
      "miss_rate": float, "read_miss_rate": float,
      "top_instruction": {"id": int, "share": float} | null,
      "target_data_type": str | null,        # display name, "arc_t (struct arc)"
      "target_type_label": str | null,       # name as it appears in the trace
      "criteria": {"c1": "Y"|"N", "c2": "Y"|"N"|"NA", "c3": ...} | null,
      "affinity": {"threshold": int, "members": [str], "counts": [[int]]},   # optional
      "partition": {"misses_before": int, "misses_after": int, "ratio": float},  # optional
      "dram": [{"region": str, "latency_ns": float, "reduction": float,
                "bit_error_rate": float, "bytes_exposed": int, "seed": int,
                "flips": {"critical": int, "approximate": int, "padding": int}}],  # optional
      "notes": [{"module": str, "message": str}],
      "warnings": [{"module": str, "message": str}]
    }

Optional sections are omitted when absent, never written as empty values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cachesim import format_rate_share
from .structdsl import CriteriaResult

SCHEMA = "approxpart.report/1"


@dataclass
class AnalysisReport:
    cache: dict
    total_accesses: int
    total_misses: int
    miss_rate: float
    read_miss_rate: float
    top_instruction: dict | None = None
    target_data_type: str | None = None
    target_type_label: str | None = None
    criteria: CriteriaResult | None = None
    affinity: dict | None = None
    partition: dict | None = None
    dram: list | None = None
    notes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def warn(self, module, message):
        self.warnings.append({"module": module, "message": message})

    def note(self, module, message):
        self.notes.append({"module": module, "message": message})

    def to_dict(self):
        d = {
            "schema": SCHEMA,
            "cache": dict(self.cache),
            "total_accesses": self.total_accesses,
            "total_misses": self.total_misses,
            "miss_rate": self.miss_rate,
            "read_miss_rate": self.read_miss_rate,
            "top_instruction": self.top_instruction,
            "target_data_type": self.target_data_type,
            "target_type_label": self.target_type_label,
            "criteria": None if self.criteria is None else {
                "c1": self.criteria.c1, "c2": self.criteria.c2, "c3": self.criteria.c3,
            },
            "notes": list(self.notes),
            "warnings": list(self.warnings),
        }
        for key in ("affinity", "partition", "dram"):
            value = getattr(self, key)
            if value is not None:
                d[key] = value
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported report schema {d.get('schema')!r}")
        crit = d.get("criteria")
        return cls(
            cache=d["cache"],
            total_accesses=d["total_accesses"],
            total_misses=d["total_misses"],
            miss_rate=d["miss_rate"],
            read_miss_rate=d["read_miss_rate"],
            top_instruction=d.get("top_instruction"),
            target_data_type=d.get("target_data_type"),
            target_type_label=d.get("target_type_label"),
            criteria=None if crit is None else CriteriaResult(crit["c1"], crit["c2"], crit["c3"]),
            affinity=d.get("affinity"),
            partition=d.get("partition"),
            dram=d.get("dram"),
            notes=list(d.get("notes", [])),
            warnings=list(d.get("warnings", [])),
        )


def _yn(v):
    return "-" if v == "NA" else v


def summary_line(report: AnalysisReport) -> str:
    """``miss_rate 33.7% (48.6%) target arc_t (struct arc) C1 Y C2 Y C3 N``"""
    share = report.top_instruction["share"] if report.top_instruction else 0.0
    parts = [f"miss_rate {format_rate_share(report.miss_rate, share)}"]
    parts.append(f"target {report.target_data_type or 'unknown'}")
    if report.criteria is not None:
        c = report.criteria
        parts.append(f"C1 {_yn(c.c1)} C2 {_yn(c.c2)} C3 {_yn(c.c3)}")
    return " ".join(parts)


def render_text(report: AnalysisReport) -> str:
    lines = [summary_line(report)]
    if report.top_instruction:
        ti = report.top_instruction
        lines.append(
            f"top_instruction {ti['id']} share {ti['share'] * 100:.1f}% "
            f"misses {report.total_misses} lookups {report.total_accesses}"
        )
    if report.read_miss_rate != report.miss_rate:
        lines.append(f"read_miss_rate {report.read_miss_rate * 100:.1f}%")
    for n in report.notes:
        lines.append(f"note {n['module']}: {n['message']}")
    if report.affinity is not None:
        a = report.affinity
        lines.append(f"affinity threshold {a['threshold']}")
        names = a["members"]
        width = max([len(x) for x in names] + [len(str(c)) for row in a["counts"] for c in row] + [1])
        lines.append(" " * width + " " + " ".join(x.rjust(width) for x in names))
        for name, row in zip(names, a["counts"]):
            lines.append(name.rjust(width) + " " + " ".join(str(c).rjust(width) for c in row))
    if report.partition is not None:
        p = report.partition
        lines.append(
            f"partition misses_before {p['misses_before']} misses_after {p['misses_after']} ratio {p['ratio']:.3f}"
        )
    for r in report.dram or []:
        f = r["flips"]
        lines.append(
            f"dram {r['region']} latency {r['latency_ns']:.3f} ns reduction {r['reduction'] * 100:.1f}% "
            f"ber {r['bit_error_rate']:g} exposed {r['bytes_exposed']} B "
            f"flips critical {f['critical']} approximate {f['approximate']} padding {f['padding']}"
        )
    for w in report.warnings:
        lines.append(f"warning {w['module']}: {w['message']}")
    return "\n".join(lines) + "\n"


def render_json(report: AnalysisReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def render_report(report: AnalysisReport, format: str = "text") -> str:
    if format == "text":
        return render_text(report)
    if format == "json":
        return render_json(report)
    raise ValueError(f"unknown report format {format!r}")


def parse_report(text: str) -> AnalysisReport:
    """Inverse of :func:`render_json`."""
    return AnalysisReport.from_dict(json.loads(text))
