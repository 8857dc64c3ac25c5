"""Answer-set metrics (F1, RHits@1, EM, set accuracy, Max@k, Empty@k) and
per-type aggregation into a report table."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

AnswerSet = frozenset


def f1(pred: Iterable[str], gold: Iterable[str]) -> float:
    pred, gold = frozenset(pred), frozenset(gold)
    if not pred or not gold:
        return 0.0
    hit = len(pred & gold)
    precision = hit / len(pred)
    recall = hit / len(gold)
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rhits1(pred: Iterable[str], gold: Iterable[str]) -> float:
    """Expected hit rate of one uniformly random pick from the prediction."""
    pred, gold = frozenset(pred), frozenset(gold)
    if not pred:
        return 0.0
    return len(pred & gold) / len(pred)


def em(pred: Iterable[str], gold: Iterable[str]) -> int:
    """1 when any predicted answer matches a gold answer."""
    return 1 if frozenset(pred) & frozenset(gold) else 0


def set_accuracy(pred: Iterable[str], gold: Iterable[str]) -> int:
    """1 only for an exact one-to-one answer-set match; empty never scores."""
    pred, gold = frozenset(pred), frozenset(gold)
    if not pred:
        return 0
    return 1 if pred == gold else 0


def max_at_k(branch_preds: Sequence[Iterable[str]], gold: Iterable[str]) -> float:
    scores = [f1(pred, gold) for pred in branch_preds]
    return max(scores) if scores else 0.0


def empty_at_k(branch_preds: Sequence[Iterable[str]], gold: Iterable[str]) -> int:
    scores = [f1(pred, gold) for pred in branch_preds]
    return 1 if all(s == 0.0 for s in scores) else 0


@dataclass
class EvalRecord:
    question_id: str
    question_type: str
    pred: frozenset
    gold: frozenset
    branch_preds: list[frozenset] = field(default_factory=list)

    def metrics(self) -> dict[str, float]:
        return {
            "f1": f1(self.pred, self.gold),
            "rhits1": rhits1(self.pred, self.gold),
            "em": float(em(self.pred, self.gold)),
            "acc": float(set_accuracy(self.pred, self.gold)),
            "max_at_k": max_at_k(self.branch_preds, self.gold),
            "empty_at_k": float(empty_at_k(self.branch_preds, self.gold)),
        }


METRIC_COLUMNS = ("f1", "rhits1", "em", "acc", "max_at_k", "empty_at_k")


@dataclass
class ReportRow:
    question_type: str
    count: int
    values: dict[str, float]


def aggregate(records: Sequence[EvalRecord]) -> list[ReportRow]:
    """Macro means per question type plus an overall row (types sorted)."""
    by_type: dict[str, list[dict[str, float]]] = {}
    all_metrics: list[dict[str, float]] = []
    for record in records:
        m = record.metrics()
        by_type.setdefault(record.question_type, []).append(m)
        all_metrics.append(m)

    def mean_row(qtype: str, rows: list[dict[str, float]]) -> ReportRow:
        values = {col: sum(r[col] for r in rows) / len(rows) for col in METRIC_COLUMNS}
        return ReportRow(qtype, len(rows), values)

    out = [mean_row(qtype, rows) for qtype, rows in sorted(by_type.items())]
    if all_metrics:
        out.append(mean_row("overall", all_metrics))
    return out


def write_report_csv(rows: list[ReportRow], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["type", "count", *METRIC_COLUMNS])
        for row in rows:
            writer.writerow([row.question_type, row.count,
                             *(f"{row.values[c]:.6f}" for c in METRIC_COLUMNS)])


def read_report_csv(path: str) -> list[ReportRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            values = {c: float(rec[c]) for c in METRIC_COLUMNS}
            rows.append(ReportRow(rec["type"], int(rec["count"]), values))
    return rows
