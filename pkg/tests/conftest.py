import json
from pathlib import Path

import pytest

from legalrag.corpus import Dataset, Instance, Label, SplitKind


def make_instance(i: int, label: Label, **overrides) -> Instance:
    fields = {
        "id": f"inst-{i:03d}",
        "introduction": f"Background text for case number {i} about a contract dispute.",
        "question": f"Is claim {i} procedurally valid?",
        "answer_candidate": f"Yes, claim {i} can proceed in court.",
        "analysis": f"Claim {i} satisfies the procedural requirements discussed above.",
        "label": label,
    }
    fields.update(overrides)
    return Instance(**fields)


@pytest.fixture
def train_dataset() -> Dataset:
    instances = [
        make_instance(i, Label.TRUE if i % 2 == 0 else Label.FALSE) for i in range(6)
    ]
    return Dataset(split_kind=SplitKind.TRAIN, instances=tuple(instances))


@pytest.fixture
def validation_dataset() -> Dataset:
    instances = [
        make_instance(100 + i, Label.TRUE if i % 3 == 0 else Label.FALSE, analysis=None)
        for i in range(5)
    ]
    return Dataset(split_kind=SplitKind.VALIDATION, instances=tuple(instances))


def write_jsonl(path: Path, records: list[dict]) -> Path:
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8"
    )
    return path


def dataset_records(dataset: Dataset) -> list[dict]:
    records = []
    for inst in dataset.instances:
        record = {
            "id": inst.id,
            "introduction": inst.introduction,
            "question": inst.question,
            "answer_candidate": inst.answer_candidate,
        }
        if inst.analysis is not None:
            record["analysis"] = inst.analysis
        if inst.label is not None:
            record["label"] = inst.label.value
        records.append(record)
    return records
