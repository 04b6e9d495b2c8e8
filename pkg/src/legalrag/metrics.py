"""Confusion matrix, accuracy, macro F1, and report emission.

Convention: TRUE is the positive class, so tp counts actual-TRUE predicted-
TRUE and tn counts actual-FALSE predicted-FALSE. Any 0/0 precision, recall,
or F1 ratio is defined as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Label
from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int
    fp_ids: tuple[str, ...] = field(default=())
    fn_ids: tuple[str, ...] = field(default=())

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp


def confusion(predictions: dict[str, Label], gold: dict[str, Label]) -> ConfusionMatrix:
    """Count the 2x2 outcomes over identical id sets, keeping the FP and FN
    instance id lists for error reporting."""

    if set(predictions) != set(gold):
        diff = sorted(set(predictions) ^ set(gold))
        raise DataError(f"prediction/gold id mismatch: {diff[:10]}")
    tn = fp = fn = tp = 0
    fp_ids: list[str] = []
    fn_ids: list[str] = []
    for iid in sorted(predictions):
        actual, predicted = gold[iid], predictions[iid]
        if actual is Label.FALSE and predicted is Label.FALSE:
            tn += 1
        elif actual is Label.FALSE and predicted is Label.TRUE:
            fp += 1
            fp_ids.append(iid)
        elif actual is Label.TRUE and predicted is Label.FALSE:
            fn += 1
            fn_ids.append(iid)
        else:
            tp += 1
    return ConfusionMatrix(tn=tn, fp=fp, fn=fn, tp=tp, fp_ids=tuple(fp_ids), fn_ids=tuple(fn_ids))


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    return (cm.tn + cm.tp) / cm.total


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of the TRUE-class and FALSE-class F1 scores."""

    if cm.total == 0:
        raise DataError("empty confusion matrix")
    f1_true = _f1(tp=cm.tp, fp=cm.fp, fn=cm.fn)
    # For the FALSE class the roles swap: tn are its true positives.
    f1_false = _f1(tp=cm.tn, fp=cm.fn, fn=cm.fp)
    return (f1_true + f1_false) / 2


@dataclass(frozen=True)
class ScoredRow:
    name: str
    matrix: ConfusionMatrix

    @property
    def macro_f1(self) -> float:
        return macro_f1(self.matrix)

    @property
    def accuracy(self) -> float:
        return accuracy(self.matrix)


def emit_report(rows: list[ScoredRow], output_dir: str | Path) -> tuple[Path, Path]:
    """Write `scores.jsonl` (machine-readable) and `report.txt` (a small
    human table plus the FP/FN id lists); deterministic byte-for-byte."""

    if not rows:
        raise DataError("nothing scored; refusing to emit an empty report")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scores_path = out / "scores.jsonl"
    report_path = out / "report.txt"

    lines = []
    for row in rows:
        cm = row.matrix
        lines.append(
            json.dumps(
                {
                    "name": row.name,
                    "macro_f1": round(row.macro_f1, 4),
                    "accuracy": round(row.accuracy, 4),
                    "tn": cm.tn,
                    "fp": cm.fp,
                    "fn": cm.fn,
                    "tp": cm.tp,
                },
                sort_keys=True,
            )
        )
    scores_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    width = max(len(r.name) for r in rows)
    table = [f"{'Method'.ljust(width)}  Macro F1  Acc."]
    table.append("-" * len(table[0]))
    for row in rows:
        table.append(f"{row.name.ljust(width)}  {row.macro_f1:.4f}    {row.accuracy:.4f}")
    table.append("")
    for row in rows:
        cm = row.matrix
        table.append(f"{row.name}: tn={cm.tn} fp={cm.fp} fn={cm.fn} tp={cm.tp}")
        if cm.fp_ids:
            table.append(f"  false positives: {', '.join(cm.fp_ids)}")
        if cm.fn_ids:
            table.append(f"  false negatives: {', '.join(cm.fn_ids)}")
    report_path.write_text("\n".join(table) + "\n", encoding="utf-8")
    return scores_path, report_path
