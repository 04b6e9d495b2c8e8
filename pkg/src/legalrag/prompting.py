"""Render the six prompting strategies into provider-ready messages.

Each prompt is a system message plus one user message made of exemplar
blocks followed by the test block. Blocks use fixed header literals
("Introduction:", "Question:", ...) separated by blank lines; chain-of-
thought strategies end the test block at "Analysis:", the rest at "Label:".
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Instance, Label, SplitKind, load_dataset
from .errors import DataError

logger = logging.getLogger(__name__)


class Strategy(enum.Enum):
    ZERO_SHOT = "zero_shot"
    ZERO_SHOT_COT = "zero_shot_cot"
    FEW_SHOT = "few_shot"
    FEW_SHOT_COT = "few_shot_cot"
    FEW_SHOT_RAG = "few_shot_rag"
    FEW_SHOT_COT_RAG = "few_shot_cot_rag"


STRATEGY_ORDER: tuple[Strategy, ...] = tuple(Strategy)


class ShotSource(enum.Enum):
    NONE = "none"
    FIXED = "fixed"
    RETRIEVED = "retrieved"


_REQUIREMENTS: dict[Strategy, tuple[ShotSource, bool]] = {
    Strategy.ZERO_SHOT: (ShotSource.NONE, False),
    Strategy.ZERO_SHOT_COT: (ShotSource.NONE, True),
    Strategy.FEW_SHOT: (ShotSource.FIXED, False),
    Strategy.FEW_SHOT_COT: (ShotSource.FIXED, True),
    Strategy.FEW_SHOT_RAG: (ShotSource.RETRIEVED, False),
    Strategy.FEW_SHOT_COT_RAG: (ShotSource.RETRIEVED, True),
}


def strategy_requirements(strategy: Strategy) -> tuple[ShotSource, bool]:
    """(where exemplars come from, whether an Analysis section is generated)."""

    return _REQUIREMENTS[strategy]


class TerminalField(enum.Enum):
    ANALYSIS = "Analysis:"
    LABEL = "Label:"


DEFAULT_SYSTEM_TEXT = (
    'Given an "Introduction" to a topic, a "Question" and an "Answer Candidate", '
    "decide whether the Answer Candidate correctly addresses the Question given "
    "the Introduction. When an Analysis section is requested, first write a "
    "detailed Analysis evaluating the validity of the Answer Candidate, then "
    'finish with a final Label section starting with the token "Label:" followed '
    "by exactly one of the words TRUE or FALSE. Do not return anything else for "
    "the Label section."
)

FIELD_HEADERS = ("Introduction:", "Question:", "Answer Candidate:", "Analysis:", "Label:")


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str = DEFAULT_SYSTEM_TEXT
    field_labels: tuple[str, ...] = FIELD_HEADERS
    label_literals: tuple[str, str] = ("TRUE", "FALSE")
    word_budget: int | None = None

    def __post_init__(self) -> None:
        for literal in self.label_literals:
            if literal not in self.system_text:
                raise DataError(
                    f"system text must spell out the output literal {literal!r}"
                )

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "PromptTemplate":
        return cls(system_text=Path(path).read_text(encoding="utf-8").strip(), **kwargs)


@dataclass(frozen=True)
class PromptMessages:
    system: str
    user: str
    terminal_field: TerminalField

    def word_count(self) -> int:
        return len(self.user.split())


@dataclass(frozen=True)
class FixedShotSet:
    """Hand-picked exemplars reused for every test case."""

    shots: tuple[Instance, ...] = field(default=())


def _format_block(
    instance: Instance,
    template: PromptTemplate,
    *,
    include_analysis: bool,
    terminal: TerminalField | None,
) -> str:
    intro_h, question_h, answer_h, analysis_h, label_h = template.field_labels
    lines = [
        f"{intro_h} {instance.introduction}",
        f"{question_h} {instance.question}",
        f"{answer_h} {instance.answer_candidate}",
    ]
    if terminal is None:
        # Full exemplar block with its gold fields.
        if include_analysis:
            lines.append(f"{analysis_h} {instance.analysis}")
        assert instance.label is not None
        lines.append(f"{label_h} {instance.label.value}")
    else:
        lines.append(terminal.value)
    return "\n".join(lines)


def render_prompt(
    strategy: Strategy,
    template: PromptTemplate,
    test: Instance,
    shots: list[Instance] | tuple[Instance, ...] = (),
) -> PromptMessages:
    """Deterministically render (strategy, template, test, shots) to messages.

    Exemplar blocks carry Analysis iff the strategy is chain-of-thought; the
    test block stops at the field the model must generate.
    """

    source, cot = strategy_requirements(strategy)
    if source is ShotSource.NONE and shots:
        raise DataError(f"{strategy.value} takes no in-context examples, got {len(shots)}")
    if source is not ShotSource.NONE and not shots:
        raise DataError(f"{strategy.value} requires in-context examples")
    for shot in shots:
        if shot.label is None:
            raise DataError(f"exemplar {shot.id!r} has no label")
        if cot and not (shot.analysis or "").strip():
            raise DataError(f"exemplar {shot.id!r} lacks the analysis a CoT prompt needs")
    terminal = TerminalField.ANALYSIS if cot else TerminalField.LABEL
    blocks = [
        _format_block(shot, template, include_analysis=cot, terminal=None) for shot in shots
    ]
    blocks.append(_format_block(test, template, include_analysis=False, terminal=terminal))
    user = "\n\n".join(blocks)
    messages = PromptMessages(system=template.system_text, user=user, terminal_field=terminal)
    if template.word_budget is not None and messages.word_count() > template.word_budget:
        logger.warning(
            "prompt for instance %s is %d words, over the %d-word budget",
            test.id,
            messages.word_count(),
            template.word_budget,
        )
    return messages


_BLOCK_HEADER = re.compile(
    r"^(Introduction|Question|Answer Candidate|Analysis|Label):", flags=re.MULTILINE
)


def parse_block(block: str) -> dict[str, str]:
    """Recover field values from a rendered block (round-trip check helper)."""

    fields: dict[str, str] = {}
    matches = list(_BLOCK_HEADER.finditer(block))
    if not matches:
        raise DataError("no field headers found in block")
    for current, nxt in zip(matches, matches[1:] + [None]):
        end = nxt.start() if nxt is not None else len(block)
        value = block[current.end() : end]
        fields[current.group(1)] = value.strip("\n").removeprefix(" ")
    return fields


def load_fixed_shots(path: str | Path) -> FixedShotSet:
    """Load the fixed exemplar file (same record format as a dataset); it
    must contain at least one TRUE and one FALSE exemplar."""

    dataset = load_dataset(path, SplitKind.VALIDATION)
    labels = {inst.label for inst in dataset.instances}
    for label in Label:
        if label not in labels:
            raise DataError(f"fixed shots need at least one {label.value} exemplar")
    return FixedShotSet(shots=dataset.instances)
