"""Threshold voting over per-strategy predictions and exhaustive
subset-times-threshold search on a labeled split."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .corpus import Label
from .errors import ConfigError, DataError
from .metrics import ConfusionMatrix, accuracy, confusion, macro_f1
from .prompting import STRATEGY_ORDER, Strategy

#: The four members the published system ensembles (the six strategies minus
#: plain few-shot and few-shot retrieval, which were evaluated but unused).
DEFAULT_MEMBERS: frozenset[Strategy] = frozenset(
    {
        Strategy.ZERO_SHOT,
        Strategy.ZERO_SHOT_COT,
        Strategy.FEW_SHOT_COT,
        Strategy.FEW_SHOT_COT_RAG,
    }
)

DEFAULT_THRESHOLD = 0.5

#: Search grid when none is configured.
DEFAULT_THRESHOLD_GRID: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class EnsembleConfig:
    members: frozenset[Strategy] = DEFAULT_MEMBERS
    threshold: float = DEFAULT_THRESHOLD
    #: TRUE iff true_fraction >= threshold; the strict > variant is opt-in.
    strict_greater: bool = False

    def __post_init__(self) -> None:
        if not self.members:
            raise ConfigError("ensemble needs at least one member strategy")
        if not (0.0 < self.threshold <= 1.0):
            raise ConfigError("threshold must be in (0, 1]")


@dataclass(frozen=True)
class VoteOutcome:
    instance_id: str
    true_fraction: float
    label: Label


def vote(
    instance_id: str,
    per_strategy_labels: dict[Strategy, Label],
    config: EnsembleConfig = EnsembleConfig(),
) -> VoteOutcome:
    """Proportion-of-TRUE voting: label is TRUE when the fraction of member
    TRUE votes meets the threshold."""

    missing = [s.value for s in config.members if s not in per_strategy_labels]
    if missing:
        raise DataError(f"instance {instance_id!r}: missing member prediction(s) {missing}")
    votes = [per_strategy_labels[s] for s in config.members]
    fraction = sum(1 for v in votes if v is Label.TRUE) / len(votes)
    if config.strict_greater:
        is_true = fraction > config.threshold
    else:
        is_true = fraction >= config.threshold
    return VoteOutcome(
        instance_id=instance_id,
        true_fraction=fraction,
        label=Label.TRUE if is_true else Label.FALSE,
    )


def vote_all(
    prediction_sets: dict[Strategy, dict[str, Label]],
    config: EnsembleConfig = EnsembleConfig(),
) -> dict[str, Label]:
    """Vote every instance covered by the member prediction sets."""

    ids = _aligned_ids({s: prediction_sets[s] for s in config.members if s in prediction_sets})
    out: dict[str, Label] = {}
    for iid in ids:
        labels = {s: prediction_sets[s][iid] for s in config.members}
        out[iid] = vote(iid, labels, config).label
    return out


@dataclass(frozen=True)
class SearchResult:
    config: EnsembleConfig
    macro_f1: float
    accuracy: float
    matrix: ConfusionMatrix


def _aligned_ids(prediction_sets: dict[Strategy, dict[str, Label]]) -> list[str]:
    if not prediction_sets:
        raise DataError("no prediction sets given")
    id_sets = {s: frozenset(preds) for s, preds in prediction_sets.items()}
    reference = next(iter(id_sets.values()))
    for strategy, ids in id_sets.items():
        if ids != reference:
            diff = sorted(ids ^ reference)
            raise DataError(f"prediction set {strategy.value} id mismatch: {diff[:5]}")
    return sorted(reference)


def _member_sort_key(members: frozenset[Strategy]) -> tuple:
    order = {s: i for i, s in enumerate(STRATEGY_ORDER)}
    return tuple(sorted(order[m] for m in members))


def search(
    prediction_sets: dict[Strategy, dict[str, Label]],
    gold: dict[str, Label],
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLD_GRID,
    min_size: int = 1,
) -> list[SearchResult]:
    """Score every non-empty member subset of size >= min_size crossed with
    every threshold against the gold labels.

    Ranking: macro F1 desc, accuracy desc, smaller subset, lower threshold,
    then canonical member order — a deterministic total order.
    """

    if not thresholds:
        raise ConfigError("empty threshold grid")
    for t in thresholds:
        if not (0.0 < t <= 1.0):
            raise ConfigError(f"threshold {t} outside (0, 1]")
    ids = _aligned_ids(prediction_sets)
    if set(ids) != set(gold):
        diff = sorted(set(ids) ^ set(gold))
        raise DataError(f"gold labels misaligned with predictions: {diff[:5]}")
    strategies = sorted(prediction_sets, key=lambda s: s.value)
    results: list[SearchResult] = []
    for size in range(max(1, min_size), len(strategies) + 1):
        for subset in combinations(strategies, size):
            members = frozenset(subset)
            for threshold in thresholds:
                config = EnsembleConfig(members=members, threshold=threshold)
                voted = vote_all(prediction_sets, config)
                cm = confusion(voted, gold)
                results.append(
                    SearchResult(
                        config=config,
                        macro_f1=macro_f1(cm),
                        accuracy=accuracy(cm),
                        matrix=cm,
                    )
                )
    results.sort(
        key=lambda r: (
            -r.macro_f1,
            -r.accuracy,
            len(r.config.members),
            r.config.threshold,
            _member_sort_key(r.config.members),
        )
    )
    return results


@dataclass(frozen=True)
class HoldoutComparison:
    """Overfit guard: one search result re-scored on a second labeled split."""

    result: SearchResult
    holdout_macro_f1: float
    holdout_accuracy: float


def compare_on_holdout(
    results: list[SearchResult],
    holdout_sets: dict[Strategy, dict[str, Label]],
    holdout_gold: dict[str, Label],
) -> list[HoldoutComparison]:
    """Re-score configurations on a holdout split, keeping the search order
    so selection-split and holdout scores read side by side."""

    comparisons = []
    for result in results:
        voted = vote_all(holdout_sets, result.config)
        cm = confusion(voted, holdout_gold)
        comparisons.append(
            HoldoutComparison(
                result=result,
                holdout_macro_f1=macro_f1(cm),
                holdout_accuracy=accuracy(cm),
            )
        )
    return comparisons
