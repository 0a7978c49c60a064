"""Threshold-free OOD metrics with OOD as the positive class, plus ID accuracy."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


@dataclass
class ScoredTestSet:
    scores: np.ndarray  # higher = more OOD
    is_ood: np.ndarray
    true_labels: np.ndarray
    predicted: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        self.is_ood = np.asarray(self.is_ood, dtype=bool)
        n = len(self.scores)
        self.true_labels = (np.full(n, -1) if self.true_labels is None
                            else np.asarray(self.true_labels))
        self.predicted = (np.full(n, -1) if self.predicted is None
                          else np.asarray(self.predicted))
        if not (len(self.is_ood) == len(self.true_labels) == len(self.predicted) == n):
            raise ValueError("ScoredTestSet fields differ in length")

    @classmethod
    def from_scores(cls, id_scores, ood_scores) -> "ScoredTestSet":
        id_scores, ood_scores = np.asarray(id_scores, float), np.asarray(ood_scores, float)
        flags = np.r_[np.zeros(len(id_scores), bool), np.ones(len(ood_scores), bool)]
        return cls(np.r_[id_scores, ood_scores], flags, None, None)


@dataclass
class MetricsRow:
    detector: str
    auroc: float
    aupr: float
    id_accuracy: float
    n_id: int
    n_ood: int


def _check(s: ScoredTestSet) -> tuple[int, int]:
    n_ood = int(s.is_ood.sum())
    n_id = len(s.is_ood) - n_ood
    if n_ood == 0 or n_id == 0:
        raise UndefinedMetricError(f"need both ID and OOD entries (n_id={n_id}, n_ood={n_ood})")
    return n_id, n_ood


def auroc(s: ScoredTestSet) -> float:
    """P(score_ood > score_id) + 0.5 P(tie), via midranks."""
    n_id, n_ood = _check(s)
    ranks = rankdata(s.scores)
    u = ranks[s.is_ood].sum() - n_ood * (n_ood + 1) / 2.0
    return float(u / (n_id * n_ood))


def aupr(s: ScoredTestSet) -> float:
    """Average precision, sum_n (R_n - R_{n-1}) P_n over descending thresholds,
    tied scores sharing one threshold."""
    _, n_ood = _check(s)
    order = np.argsort(-s.scores, kind="stable")
    scores, pos = s.scores[order], s.is_ood[order]
    # last index of each tie group
    ends = np.r_[np.flatnonzero(np.diff(scores) != 0), len(scores) - 1]
    tp = np.cumsum(pos)[ends]
    seen = ends + 1
    precision = tp / seen
    recall = tp / n_ood
    gains = np.diff(np.r_[0.0, recall])
    return float(np.sum(gains * precision))


def id_accuracy(s: ScoredTestSet) -> float:
    mask = ~s.is_ood
    if not mask.any():
        raise UndefinedMetricError("no ID entries to score accuracy on")
    return float(np.mean(s.predicted[mask] == s.true_labels[mask]))


def metrics_row(detector: str, s: ScoredTestSet) -> MetricsRow:
    n_id, n_ood = _check(s)
    return MetricsRow(detector, auroc(s), aupr(s), id_accuracy(s), n_id, n_ood)


def aggregate(values) -> tuple[float, float]:
    """Mean and n-1 sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise UndefinedMetricError("nothing to aggregate")
    std = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), std


def aggregate_rows(rows: list[MetricsRow]) -> dict[str, tuple[float, float]]:
    return {m: aggregate([getattr(r, m) for r in rows]) for m in ("auroc", "aupr", "id_accuracy")}


CSV_FIELDS = ("run_id", "seed", "ood_classes", "detector", "auroc", "aupr",
              "id_accuracy", "n_id", "n_ood")


def format_classes(classes) -> str:
    return "-".join(str(int(c)) for c in classes)


def metrics_csv(records: list[tuple[str, int, tuple[int, ...], MetricsRow]]) -> str:
    """Render (run_id, seed, ood_classes, row) records with the fixed header.
    Floats use repr so the text round-trips exactly."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for run_id, seed, classes, row in records:
        w.writerow([run_id, seed, format_classes(classes), row.detector, repr(row.auroc),
                    repr(row.aupr), repr(row.id_accuracy), row.n_id, row.n_ood])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[dict]:
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        if tuple(rec) != CSV_FIELDS:
            raise ValueError(f"unexpected metrics header {tuple(rec)}")
        row = MetricsRow(rec["detector"], float(rec["auroc"]), float(rec["aupr"]),
                         float(rec["id_accuracy"]), int(rec["n_id"]), int(rec["n_ood"]))
        out.append({"run_id": rec["run_id"], "seed": int(rec["seed"]),
                    "ood_classes": rec["ood_classes"], "row": row})
    return out


def row_dict(row: MetricsRow) -> dict:
    return asdict(row)


def row_from_dict(d: dict) -> MetricsRow:
    names = {f.name for f in fields(MetricsRow)}
    return MetricsRow(**{k: v for k, v in d.items() if k in names})
