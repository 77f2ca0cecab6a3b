"""Verification reports and their CSV / JSON serialization."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field


def _clean(v):
    if isinstance(v, float):
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


@dataclass
class VerificationReport:
    """Per-sample margins of one inequality, with the worst case and verdict.

    Each row carries a ``margin`` already oriented so that the inequality
    holds iff ``margin >= -tol``.
    """

    experiment: str
    model: dict
    G: str
    tol: float
    tol_source: str
    rows: list[dict] = field(default_factory=list)
    n_excluded: int = 0
    excluded: list[dict] = field(default_factory=list)
    hypotheses: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    @property
    def min_margin(self) -> float:
        if not self.rows:
            return math.nan
        return min(r["margin"] for r in self.rows)

    @property
    def argmin(self) -> dict | None:
        if not self.rows:
            return None
        return min(self.rows, key=lambda r: r["margin"])

    @property
    def passed(self) -> bool:
        return bool(self.rows) and self.min_margin >= -self.tol

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        out = VerificationReport(self.experiment, self.model, self.G, self.tol, self.tol_source,
                                 self.rows + other.rows, self.n_excluded + other.n_excluded,
                                 self.excluded + other.excluded,
                                 {**self.hypotheses, **other.hypotheses}, {**self.extra, **other.extra})
        return out

    def summary(self) -> dict:
        return _clean({
            "experiment": self.experiment,
            "model": self.model,
            "G": self.G,
            "n_samples": self.n_samples,
            "n_excluded": self.n_excluded,
            "min_margin": self.min_margin,
            "argmin": self.argmin,
            "pass": self.passed,
            "tol": self.tol,
            "tol_source": self.tol_source,
            "hypotheses": self.hypotheses,
            "extra": self.extra,
        })

    def csv_text(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0].keys())
        for r in self.rows[1:]:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
        return buf.getvalue()

    def json_text(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _fmt(v.item())
    return "" if v is None else v


def emit_report(report, fmt: str, path: str) -> list[str]:
    """Write ``<path>.json`` (summary) and, for ``fmt == 'csv'``, ``<path>.csv`` rows."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    base = path[:-5] if path.endswith(".json") else path[:-4] if path.endswith(".csv") else path
    d = os.path.dirname(base)
    if d:
        os.makedirs(d, exist_ok=True)
    written = []
    with open(base + ".json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.json_text())
    written.append(base + ".json")
    if fmt == "csv":
        with open(base + ".csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.csv_text())
        written.append(base + ".csv")
    return written
