"""Long-input handling for 512-token encoders: budget the per-window word
capacity, split the introduction evenly, classify each window together with
the question and answer, and take a majority vote."""

from __future__ import annotations

import math
from dataclasses import dataclass

import requests

from .corpus import Instance, Label
from .errors import DataError, ProviderError

TOKEN_LIMIT = 512


@dataclass(frozen=True)
class WindowPlan:
    capacity_words: int
    window_sizes: tuple[int, ...]

    @property
    def num_windows(self) -> int:
        return len(self.window_sizes)


def plan_windows(intro_words: int, qa_words: int, limit: int = TOKEN_LIMIT) -> WindowPlan:
    """Capacity is half the word budget left after the question and answer
    (halving absorbs the tokens-per-word overhead); the introduction is then
    split into ceil(intro/capacity) windows as evenly as possible, with
    remainder words going to the earliest windows."""

    if intro_words < 1:
        raise DataError("introduction has no words")
    capacity = (limit - qa_words) // 2
    if capacity <= 0:
        raise DataError(
            f"no window capacity: question+answer ({qa_words} words) exhaust the {limit} limit"
        )
    num_windows = math.ceil(intro_words / capacity)
    base, remainder = divmod(intro_words, num_windows)
    sizes = tuple(base + 1 if i < remainder else base for i in range(num_windows))
    return WindowPlan(capacity_words=capacity, window_sizes=sizes)


def split_introduction(introduction: str, plan: WindowPlan) -> list[str]:
    """Cut the introduction into contiguous word spans matching the plan;
    joining the windows reconstructs the original word sequence."""

    words = introduction.split()
    if len(words) != sum(plan.window_sizes):
        raise DataError(
            f"plan covers {sum(plan.window_sizes)} words but introduction has {len(words)}"
        )
    windows = []
    cursor = 0
    for size in plan.window_sizes:
        windows.append(" ".join(words[cursor : cursor + size]))
        cursor += size
    return windows


def window_vote(window_labels: list[Label]) -> Label:
    """Unweighted majority; an exact tie defaults to FALSE, the corpus
    majority class."""

    if not window_labels:
        raise DataError("no window labels to vote over")
    true_votes = sum(1 for label in window_labels if label is Label.TRUE)
    return Label.TRUE if true_votes * 2 > len(window_labels) else Label.FALSE


class WindowClassifier:
    """Contract: `classify(text) -> Label`, deterministic under MOCK."""

    def classify(self, text: str) -> Label:
        raise NotImplementedError


class RuleMockClassifier(WindowClassifier):
    """Labels TRUE when any trigger word appears in the text."""

    def __init__(self, trigger_words: set[str] | None = None):
        self.trigger_words = {w.lower() for w in (trigger_words or {"valid"})}

    def classify(self, text: str) -> Label:
        tokens = {t.lower() for t in text.split()}
        return Label.TRUE if tokens & self.trigger_words else Label.FALSE


class RemoteWindowClassifier(WindowClassifier):
    """HTTP classifier: POST `{endpoint}/classify` `{"text": ...}` returns
    `{"label": "TRUE"|"FALSE"}`."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def classify(self, text: str) -> Label:
        try:
            resp = requests.post(
                f"{self.endpoint}/classify", json={"text": text}, timeout=self.timeout
            )
            resp.raise_for_status()
            return Label(resp.json()["label"])
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise ProviderError(f"window classifier failed: {exc}") from exc


def classify_windowed(
    instance: Instance, classifier: WindowClassifier, limit: int = TOKEN_LIMIT
) -> Label:
    """Full baseline for one instance: plan, split, classify each window
    appended to the question and answer, vote."""

    qa_text = f"{instance.question} {instance.answer_candidate}"
    qa_words = len(qa_text.split())
    plan = plan_windows(len(instance.introduction.split()), qa_words, limit)
    windows = split_introduction(instance.introduction, plan)
    labels = [classifier.classify(f"{window} {qa_text}") for window in windows]
    return window_vote(labels)
