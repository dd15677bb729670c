"""EM / FilteredAcc / Rec for table and column prediction."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import AbstractSet, Iterable, Sequence

from .schema import SchemaLinkSet

METRIC_NAMES = ("em", "filtered_acc", "recall")


def exact_match(pred: AbstractSet, truth: AbstractSet) -> int:
    return int(set(pred) == set(truth))


def filtered_acc(pred: AbstractSet, truth: AbstractSet) -> int:
    """1 when every required item survives the filter (``truth <= pred``)."""
    return int(set(truth) <= set(pred))


def recall(pred: AbstractSet, truth: AbstractSet) -> float:
    truth = set(truth)
    if not truth:
        return 1.0
    return len(set(pred) & truth) / len(truth)


@dataclass(frozen=True)
class TaskScores:
    em: float
    filtered_acc: float
    recall: float


@dataclass(frozen=True)
class MetricReport:
    """Macro-averaged percentages for the two prediction tasks."""

    n: int
    table: TaskScores
    column: TaskScores

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [
            f"{'Task':<18}{'EM':>8}{'FilteredAcc':>14}{'Rec':>8}",
            "-" * 48,
        ]
        for label, s in (("Table Prediction", self.table), ("Column Prediction", self.column)):
            rows.append(f"{label:<18}{s.em:>8.2f}{s.filtered_acc:>14.2f}{s.recall:>8.2f}")
        rows.append(f"(n = {self.n})")
        return "\n".join(rows)


def _task(pairs: Sequence[tuple]) -> TaskScores:
    n = len(pairs)
    return TaskScores(
        em=100.0 * sum(exact_match(p, t) for p, t in pairs) / n,
        filtered_acc=100.0 * sum(filtered_acc(p, t) for p, t in pairs) / n,
        recall=100.0 * sum(recall(p, t) for p, t in pairs) / n,
    )


def aggregate_report(pairs: Iterable[tuple[SchemaLinkSet, SchemaLinkSet]]) -> MetricReport:
    """Macro averages over ``(prediction, truth)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot aggregate an empty prediction list")
    return MetricReport(
        n=len(pairs),
        table=_task([(p.tables, t.tables) for p, t in pairs]),
        column=_task([(p.columns, t.columns) for p, t in pairs]),
    )
