"""Report rows and their CSV, JSON and plot-data encodings."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

from .core import ConfigError

__all__ = ["ReportRow", "BoundReport", "CSV_HEADER", "FORMATS", "config_hash", "emit_report", "parse_json_report"]

CSV_HEADER = ("model", "theorem", "order", "t", "bound", "applicable", "estimate", "se", "verdict", "seconds")
FORMATS = ("csv", "json", "plotdata")


@dataclass(frozen=True)
class ReportRow:
    model: str = ""
    theorem: str = ""
    order: Optional[int] = None
    t: Optional[float] = None
    bound: Optional[float] = None
    applicable: Optional[bool] = None
    estimate: Optional[float] = None
    se: Optional[float] = None
    verdict: str = ""
    seconds: Optional[float] = None


@dataclass
class BoundReport:
    config_hash: str
    rows: List[ReportRow] = field(default_factory=list)

    @property
    def violated(self) -> bool:
        return any(r.verdict == "violated" for r in self.rows)


def config_hash(config: dict) -> str:
    """Short digest of the canonical JSON form of a resolved configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _num(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.9g}"


def _csv(report: BoundReport) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\r\n")
    out.writerow(CSV_HEADER)
    for r in report.rows:
        out.writerow([
            r.model,
            r.theorem,
            "" if r.order is None else str(r.order),
            _num(r.t),
            _num(r.bound),
            "" if r.applicable is None else str(r.applicable).lower(),
            _num(r.estimate),
            _num(r.se),
            r.verdict,
            _num(r.seconds),
        ])
    return buf.getvalue()


def _json(report: BoundReport) -> str:
    doc = {"config_hash": report.config_hash, "rows": [asdict(r) for r in report.rows]}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _plotdata(report: BoundReport) -> str:
    lines = [f"# config_hash={report.config_hash}", "x,bound,estimate,lo,hi"]
    for r in report.rows:
        x = r.t if r.t is not None else r.order
        if r.estimate is None or r.se is None:
            lo = hi = None
        else:
            lo, hi = r.estimate - 3.0 * r.se, r.estimate + 3.0 * r.se
        lines.append(",".join(_num(v) for v in (x, r.bound, r.estimate, lo, hi)))
    return "\n".join(lines) + "\n"


def emit_report(report: BoundReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        text = _csv(report)
    elif fmt == "json":
        text = _json(report)
    elif fmt == "plotdata":
        text = _plotdata(report)
    else:
        raise ConfigError(f"unknown format {fmt!r}; choose from {FORMATS}")
    return text.encode("utf-8")


def parse_json_report(data: bytes) -> BoundReport:
    doc = json.loads(data)
    names = {f.name for f in fields(ReportRow)}
    rows = []
    for raw in doc["rows"]:
        if set(raw) != names:
            raise ConfigError(f"report row has fields {sorted(raw)}")
        rows.append(ReportRow(**raw))
    return BoundReport(doc["config_hash"], rows)
