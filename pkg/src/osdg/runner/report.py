"""Summary tables across runs: mean +/- sample std per method and metric."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from ..metrics import aggregate
from .experiment import RunManifest

METRICS = ("auroc", "aupr", "id_accuracy")
SUMMARY_FIELDS = ("method", "n", "auroc_mean", "auroc_std", "aupr_mean", "aupr_std",
                  "id_accuracy_mean", "id_accuracy_std")
_PRETTY = {"energy": "Energy", "msp": "MSP", "ddu": "DDU", "ocsvm": "OCSVM"}


def method_name(arm: str, detector: str) -> str:
    prefix = "Ours" if arm == "fsi" else arm.upper()
    return f"{prefix}-{_PRETTY.get(detector, detector)}"


@dataclass
class SummaryRow:
    method: str
    n: int
    stats: dict[str, tuple[float, float]]


def summarize(manifests: list[RunManifest]) -> list[SummaryRow]:
    groups: dict[str, list] = {}
    for m in manifests:
        for row in m.rows():
            groups.setdefault(method_name(m.arm, row.detector), []).append(row)
    out = []
    for method, rows in groups.items():
        stats = {k: aggregate([getattr(r, k) for r in rows]) for k in METRICS}
        out.append(SummaryRow(method, len(rows), stats))
    return out


def summary_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([r.method, r.n] + [repr(v) for k in METRICS for v in r.stats[k]])
    return buf.getvalue()


def read_summary_csv(text: str) -> list[SummaryRow]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        stats = {k: (float(rec[f"{k}_mean"]), float(rec[f"{k}_std"])) for k in METRICS}
        rows.append(SummaryRow(rec["method"], int(rec["n"]), stats))
    return rows


def summary_text(rows: list[SummaryRow]) -> str:
    """Aligned table in percent; '*' marks the best mean in each column.
    The +/- figure is the sample standard deviation across runs."""
    best = {k: max((r.stats[k][0] for r in rows), default=None) for k in METRICS}
    header = ["Method", "AUROC", "AUPR", "ID Accuracy"]
    body = []
    for r in rows:
        cells = [r.method]
        for k in METRICS:
            mean, std = r.stats[k]
            mark = "*" if mean == best[k] else " "
            cells.append(f"{100 * mean:6.2f} ± {100 * std:5.2f}{mark}")
        body.append(cells)
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]

    def fmt(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths))

    lines = [fmt(header), "-+-".join("-" * w for w in widths)] + [fmt(c) for c in body]
    lines.append("(mean ± sample std over runs; * = best in column)")
    return "\n".join(lines) + "\n"


def report(manifests: list[RunManifest]) -> tuple[str, str]:
    rows = summarize(manifests)
    return summary_csv(rows), summary_text(rows)
