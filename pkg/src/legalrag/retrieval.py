"""Class-partitioned exact nearest-neighbor index over training exemplars.

Exact search only: the training corpus is a few hundred instances, so a
linear scan per query is both fast enough and trivially correct. Ties are
broken by ascending instance id for cross-platform reproducibility.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Dataset, Label
from .embedding import (
    EmbeddingProvider,
    EmbeddingVector,
    KeyMode,
    build_key,
    cosine_similarity,
)
from .errors import DataError, ProviderError


@dataclass(frozen=True)
class IndexEntry:
    instance_id: str
    label: Label
    vector: EmbeddingVector


@dataclass(frozen=True)
class ExampleIndex:
    entries: tuple[IndexEntry, ...]
    fingerprint: str

    @property
    def dim(self) -> int:
        return self.entries[0].vector.dim

    def partition(self, label: Label) -> list[IndexEntry]:
        return [e for e in self.entries if e.label is label]


class OrderingPolicy(enum.Enum):
    FALSE_THEN_TRUE = "false_then_true"
    BY_ASCENDING_SIMILARITY = "by_ascending_similarity"


@dataclass(frozen=True)
class RetrievalConfig:
    per_class_k: int = 1
    exclude_ids: frozenset[str] = frozenset()
    ordering_policy: OrderingPolicy = OrderingPolicy.FALSE_THEN_TRUE

    def __post_init__(self) -> None:
        if self.per_class_k < 1:
            raise ValueError("per_class_k must be >= 1")


@dataclass(frozen=True)
class RetrievedExamples:
    """Per-class nearest exemplars, scores non-increasing within each class."""

    per_class: dict[Label, tuple[tuple[str, float], ...]] = field(default_factory=dict)


def provider_fingerprint(provider: EmbeddingProvider, key_mode: KeyMode) -> str:
    parts = dict(provider.fingerprint_parts)
    parts["key_mode"] = key_mode.value
    canonical = json.dumps(parts, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_index(
    train: Dataset, provider: EmbeddingProvider, key_mode: KeyMode = KeyMode.TRIPLET
) -> ExampleIndex:
    """Embed every training instance once; both label partitions must end up
    non-empty for retrieval to be possible."""

    entries: list[IndexEntry] = []
    for inst in train.instances:
        if inst.label is None:
            raise DataError(f"instance {inst.id!r} has no label; index needs a labeled split")
        try:
            vector = provider.embed(build_key(inst, key_mode).text)
        except Exception as exc:
            raise ProviderError(f"embedding failed for instance {inst.id!r}: {exc}") from exc
        entries.append(IndexEntry(instance_id=inst.id, label=inst.label, vector=vector))
    for label in Label:
        if not any(e.label is label for e in entries):
            raise DataError(f"empty {label.value} partition: retrieval needs both classes")
    return ExampleIndex(
        entries=tuple(entries), fingerprint=provider_fingerprint(provider, key_mode)
    )


def retrieve(
    index: ExampleIndex,
    query: EmbeddingVector,
    query_id: str,
    config: RetrievalConfig = RetrievalConfig(),
) -> RetrievedExamples:
    """Per class, the per_class_k entries maximizing cosine similarity.

    The query's own id and any configured exclusions are never returned;
    ties break by ascending instance id.
    """

    if query.dim != index.dim:
        raise ValueError(f"query dim {query.dim} != index dim {index.dim}")
    excluded = set(config.exclude_ids) | {query_id}
    per_class: dict[Label, tuple[tuple[str, float], ...]] = {}
    for label in Label:
        candidates = [e for e in index.partition(label) if e.instance_id not in excluded]
        if len(candidates) < config.per_class_k:
            raise DataError(
                f"{label.value} partition has {len(candidates)} candidates after "
                f"exclusions, need {config.per_class_k}"
            )
        scored = sorted(
            ((cosine_similarity(query, e.vector), e.instance_id) for e in candidates),
            key=lambda item: (-item[0], item[1]),
        )
        per_class[label] = tuple((iid, sim) for sim, iid in scored[: config.per_class_k])
    return RetrievedExamples(per_class=per_class)


def order_examples(
    retrieved: RetrievedExamples, policy: OrderingPolicy = OrderingPolicy.FALSE_THEN_TRUE
) -> list[tuple[str, Label, float]]:
    """Flatten retrieved exemplars into prompt order.

    FALSE_THEN_TRUE keeps both label words at fixed prompt positions;
    BY_ASCENDING_SIMILARITY puts the most similar exemplar adjacent to the
    test instance.
    """

    flat = [
        (iid, label, sim)
        for label in (Label.FALSE, Label.TRUE)
        for iid, sim in retrieved.per_class.get(label, ())
    ]
    if policy is OrderingPolicy.BY_ASCENDING_SIMILARITY:
        flat.sort(key=lambda item: (item[2], item[0]))
    return flat


def save_index(index: ExampleIndex, path: str | Path) -> None:
    """Persist to a single JSONL file: one header line carrying dim,
    fingerprint, and per-class counts, then one line per entry."""

    counts = {label.value: len(index.partition(label)) for label in Label}
    lines = [
        json.dumps(
            {"dim": index.dim, "fingerprint": index.fingerprint, "counts": counts},
            sort_keys=True,
        )
    ]
    for entry in index.entries:
        lines.append(
            json.dumps(
                {
                    "id": entry.instance_id,
                    "label": entry.label.value,
                    "vector": list(entry.vector.values),
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_index(path: str | Path, expected_fingerprint: str | None = None) -> ExampleIndex:
    """Reload a persisted index; if a fingerprint is given (derived from the
    active provider config), it must match the stored one."""

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"empty index file: {path}")
    header = json.loads(lines[0])
    if expected_fingerprint is not None and header["fingerprint"] != expected_fingerprint:
        raise DataError(
            f"index fingerprint {header['fingerprint']} does not match active "
            f"provider config {expected_fingerprint}"
        )
    entries = []
    for line in lines[1:]:
        record = json.loads(line)
        entries.append(
            IndexEntry(
                instance_id=record["id"],
                label=Label(record["label"]),
                vector=EmbeddingVector(values=tuple(record["vector"])),
            )
        )
    index = ExampleIndex(entries=tuple(entries), fingerprint=header["fingerprint"])
    if index.dim != header["dim"]:
        raise DataError("index header dim disagrees with entry vectors")
    return index
