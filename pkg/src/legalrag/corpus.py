"""Dataset schema, JSONL loading/saving, and cross-split leakage auditing.

A dataset file holds one JSON object per line with keys ``id``,
``introduction``, ``question``, ``answer_candidate``, ``analysis``
(optional) and ``label`` (optional, literal ``"TRUE"`` / ``"FALSE"``).
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError


class SplitKind(enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Label(enum.Enum):
    TRUE = "TRUE"
    FALSE = "FALSE"

    @classmethod
    def from_text(cls, text: str) -> "Label":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise DataError(f"label must be TRUE or FALSE, got {text!r}") from None

    def flipped(self) -> "Label":
        return Label.FALSE if self is Label.TRUE else Label.TRUE


@dataclass(frozen=True)
class Instance:
    """One dataset row: background text, question, candidate answer, and
    optionally the expert analysis and gold label."""

    id: str
    introduction: str
    question: str
    answer_candidate: str
    analysis: str | None = None
    label: Label | None = None

    def validate(self, split_kind: SplitKind) -> None:
        for name in ("introduction", "question", "answer_candidate"):
            if not getattr(self, name).strip():
                raise DataError(f"instance {self.id!r}: field {name!r} is empty")
        if split_kind in (SplitKind.TRAIN, SplitKind.VALIDATION) and self.label is None:
            raise DataError(f"instance {self.id!r}: label required on {split_kind.value} split")
        if split_kind is SplitKind.TRAIN and not (self.analysis or "").strip():
            raise DataError(f"instance {self.id!r}: analysis required on train split")


@dataclass(frozen=True)
class Dataset:
    split_kind: SplitKind
    instances: tuple[Instance, ...]

    def __len__(self) -> int:
        return len(self.instances)

    def by_id(self) -> dict[str, Instance]:
        return {inst.id: inst for inst in self.instances}


@dataclass(frozen=True)
class LeakageReport:
    """Pairs of instances sharing a normalized introduction+question key."""

    overlapping_pairs: tuple[tuple[str, str], ...] = field(default=())

    @property
    def overlap_count(self) -> int:
        return len(self.overlapping_pairs)


_WS_RUN = re.compile(r"\s+")


def _normalize(text: str) -> str:
    return _WS_RUN.sub(" ", text.strip().lower())


def instance_from_record(record: dict, *, where: str = "") -> Instance:
    """Build an Instance from a parsed JSON record, reporting the offending
    field on schema violations."""

    missing = [k for k in ("id", "introduction", "question", "answer_candidate") if k not in record]
    if missing:
        raise DataError(f"{where}missing field(s) {missing}")
    label_text = record.get("label")
    return Instance(
        id=str(record["id"]),
        introduction=record["introduction"],
        question=record["question"],
        answer_candidate=record["answer_candidate"],
        analysis=record.get("analysis"),
        label=Label.from_text(label_text) if label_text is not None else None,
    )


def load_dataset(path: str | Path, split_kind: SplitKind) -> Dataset:
    """Load a JSONL dataset file, validating every record for the split kind.

    Record order is preserved; duplicate ids and malformed records are
    reported with their line number.
    """

    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    instances: list[Instance] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}: "
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}invalid JSON: {exc}") from None
        try:
            inst = instance_from_record(record, where=where)
            inst.validate(split_kind)
        except DataError as exc:
            raise DataError(f"{where}{exc}" if where not in str(exc) else str(exc)) from None
        if inst.id in seen_ids:
            raise DataError(f"{where}duplicate id {inst.id!r}")
        seen_ids.add(inst.id)
        instances.append(inst)
    return Dataset(split_kind=split_kind, instances=tuple(instances))


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset back to JSONL form; load(save(D)) round-trips."""

    lines = []
    for inst in dataset.instances:
        record: dict = {
            "id": inst.id,
            "introduction": inst.introduction,
            "question": inst.question,
            "answer_candidate": inst.answer_candidate,
        }
        if inst.analysis is not None:
            record["analysis"] = inst.analysis
        if inst.label is not None:
            record["label"] = inst.label.value
        lines.append(json.dumps(record, ensure_ascii=False, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def leakage_key(instance: Instance) -> str:
    return _normalize(instance.introduction) + "\x00" + _normalize(instance.question)


def audit_leakage(train: Dataset, other: Dataset) -> LeakageReport:
    """Flag every instance in `other` whose normalized introduction+question
    pair also occurs in `train`."""

    train_keys: dict[str, list[str]] = {}
    for inst in train.instances:
        train_keys.setdefault(leakage_key(inst), []).append(inst.id)
    pairs: list[tuple[str, str]] = []
    for inst in other.instances:
        for train_id in train_keys.get(leakage_key(inst), ()):
            pairs.append((train_id, inst.id))
    return LeakageReport(overlapping_pairs=tuple(pairs))
