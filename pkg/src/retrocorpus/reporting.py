"""Per-domain corpus statistics, funnel rendering and evaluation reports."""

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any

from .corpus import DomainTag, ParallelPair, Record, target_text
from .metrics import MetricResult
from .pipeline import FunnelReport
from .tokenization import Tokenizer, WhitespaceTokenizer


@dataclass
class SideStats:
    min: int = 0
    max: int = 0
    total: int = 0
    n: int = 0

    def add(self, count: int) -> None:
        if self.n == 0:
            self.min = self.max = count
        else:
            self.min = min(self.min, count)
            self.max = max(self.max, count)
        self.total += count
        self.n += 1

    def merge(self, other: "SideStats") -> None:
        if other.n == 0:
            return
        if self.n == 0:
            self.min, self.max = other.min, other.max
        else:
            self.min = min(self.min, other.min)
            self.max = max(self.max, other.max)
        self.total += other.total
        self.n += other.n

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"min": self.min, "max": self.max, "mean": self.mean,
                "mean_1dp": round(self.mean, 1), "total": self.total}


@dataclass
class DomainStats:
    """Token statistics for one domain; ``target`` is the variety side, ``source`` the rich-language side."""

    domain: str
    n_docs: int = 0
    target: SideStats = field(default_factory=SideStats)
    source: SideStats | None = field(default_factory=SideStats)

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "n_docs": self.n_docs,
            "target": self.target.to_dict(),
            "source": self.source.to_dict() if self.source is not None else None,
        }


def corpus_stats(records: Iterable[Record], tokenizer: Tokenizer | None = None) -> list[DomainStats]:
    """One row per domain present (enum order) followed by an ``All`` row.

    Documents without a translation contribute to the target side only, and
    the source side is reported as ``None`` when no pairs were seen.
    """
    tok = tokenizer or WhitespaceTokenizer()
    rows: dict[str, DomainStats] = {}
    saw_pairs = False
    for rec in records:
        row = rows.setdefault(rec.domain.value, DomainStats(rec.domain.value))
        row.n_docs += 1
        row.target.add(tok.count(target_text(rec)))
        if isinstance(rec, ParallelPair):
            saw_pairs = True
            row.source.add(tok.count(rec.source_text))

    order = [d.value for d in DomainTag]
    out = [rows[d] for d in order if d in rows]
    total = DomainStats("All")
    for row in out:
        total.n_docs += row.n_docs
        total.target.merge(row.target)
        total.source.merge(row.source)
    if not saw_pairs and out:
        for row in out + [total]:
            row.source = None
    return out + [total]


def stats_table(rows: list[DomainStats]) -> str:
    """Aligned plain-text table with means at one decimal."""
    header = ["Domain", "# Docs", "Tgt Min", "Tgt Max", "Tgt Mean", "Tgt Total",
              "Src Min", "Src Max", "Src Mean", "Src Total"]
    body = [header] + [_stats_cells(r) for r in rows]
    widths = [max(len(line[i]) for line in body) for i in range(len(header))]
    lines = []
    for k, line in enumerate(body):
        cells = [line[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(line[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def stats_csv(rows: list[DomainStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["domain", "n_docs", "target_min", "target_max", "target_mean", "target_total",
                     "source_min", "source_max", "source_mean", "source_total"])
    for r in rows:
        writer.writerow(_stats_cells(r, thousands=False))
    return buf.getvalue()


def _stats_cells(r: DomainStats, thousands: bool = True) -> list[str]:
    num = (lambda v: f"{v:,}") if thousands else str

    def side(s):
        if s is None:
            return ["", "", "", ""]
        return [num(s.min), num(s.max), f"{s.mean:.1f}", num(s.total)]

    return [r.domain, num(r.n_docs)] + side(r.target) + side(r.source)


def render_funnel(report: FunnelReport, fmt: str = "text") -> str:
    """Funnel as text (stage, remaining, dropped) or as the JSON report."""
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    lines = [f"{'stage':<14} {'remaining':>10} {'dropped':>9}"]
    if not report.stages and report.initial == 0:
        return lines[0] + "\n"
    lines.append(f"{'initial':<14} {report.initial:>10}")
    for name, delta in report.drops().items():
        remaining = dict(report.stages)[name]
        lines.append(f"{name:<14} {remaining:>10} {delta:>9}")
    return "\n".join(lines) + "\n"


def funnel_from_counts(counts: list[int], names: list[str] | None = None) -> FunnelReport:
    names = names or [f"stage{i}" for i in range(1, len(counts))]
    return FunnelReport(counts[0], list(zip(names, counts[1:]))) if counts else FunnelReport(0, [])


def assemble_eval_report(entries: Iterable[tuple[str, str, Any]]) -> dict[str, Any]:
    """Flatten (system, benchmark, result) triples into sorted metric records.

    ``result`` may be a MetricResult, a VID result (anything with ``vid``), a
    float, or ``None``/a ``(None, reason)`` tuple for an undefined metric.
    """
    records = []
    for system, benchmark, result in entries:
        records.extend(_metric_records(system, benchmark, result))
    records.sort(key=lambda r: (r["system"], r["benchmark"], r["metric"]))
    return {"records": records}


def _metric_records(system, benchmark, result) -> list[dict[str, Any]]:
    base = {"system": system, "benchmark": benchmark}
    if isinstance(result, MetricResult):
        rec = {**base, "metric": result.name, "value": result.value, "n": result.n}
        if result.ci_low is not None:
            rec["ci_low"], rec["ci_high"] = result.ci_low, result.ci_high
        if result.meta:
            rec["meta"] = result.meta
        return [rec]
    if hasattr(result, "vid"):
        rec = {**base, "metric": "vid", "value": result.vid,
               "pct_ep_hyp": result.pct_ep_hyp, "pct_ep_ref": result.pct_ep_ref}
        if result.vid is None:
            rec["reason"] = "reference target-variety share is zero"
        return [rec]
    if isinstance(result, tuple) and len(result) == 2 and result[0] is None:
        return [{**base, "metric": "vid", "value": None, "reason": str(result[1])}]
    if result is None:
        return [{**base, "metric": "vid", "value": None, "reason": "not computed"}]
    if isinstance(result, tuple) and len(result) == 2:
        return [{**base, "metric": str(result[0]), "value": float(result[1])}]
    raise TypeError(f"cannot report result of type {type(result).__name__}")


def dumps_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
