"""Transformer sentence encoder with tokenize-truncate-pool-normalize flow.

The configured model (a legal-domain BERT by default) is loaded from the
local HuggingFace cache when available. In air-gapped environments the
encoder falls back to a deterministically seeded small BERT with a hashing
wordpiece-style tokenizer: same protocol, same determinism guarantees, no
downloaded weights.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import re
from dataclasses import dataclass

import torch

logger = logging.getLogger(__name__)


class Pooling(enum.Enum):
    CLS = "cls"
    MEAN = "mean"


@dataclass(frozen=True)
class ServiceConfig:
    model_id: str = "nlpaueb/legal-bert-base-uncased"
    max_tokens: int = 512
    pooling: Pooling = Pooling.MEAN
    host: str = "127.0.0.1"
    port: int = 8901
    batch_limit: int = 64

    def __post_init__(self) -> None:
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


_WORD = re.compile(r"\S+")

_FALLBACK_VOCAB = 8192
_FALLBACK_RESERVED = 2  # ids 0 (pad) and 1 (cls) are never produced by hashing


class HashingTokenizer:
    """Deterministic stand-in tokenizer: one id per whitespace word, hashed
    into a fixed vocab. Platform-independent (md5, no env seeding)."""

    model_max_length = 512

    def __init__(self, vocab_size: int = _FALLBACK_VOCAB):
        self.vocab_size = vocab_size

    def encode(self, text: str, max_tokens: int) -> list[int]:
        words = _WORD.findall(text)[: max_tokens - 1]  # room for the leading CLS slot
        ids = [1]
        for word in words:
            digest = hashlib.md5(word.lower().encode("utf-8")).digest()
            span = self.vocab_size - _FALLBACK_RESERVED
            ids.append(_FALLBACK_RESERVED + int.from_bytes(digest[:4], "big") % span)
        return ids


class SentenceEncoder:
    """Wraps a BERT-class model; `encode` is deterministic (inference mode,
    no dropout) and returns unit-normalized vectors."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self._tokenizer = None
        self._model = None
        self._hashing: HashingTokenizer | None = None
        self.fallback = False

    @property
    def loaded(self) -> bool:
        return self._model is not None

    def load(self) -> None:
        if self.loaded:
            return
        try:
            from transformers import AutoModel, AutoTokenizer

            self._tokenizer = AutoTokenizer.from_pretrained(self.config.model_id)
            self._model = AutoModel.from_pretrained(self.config.model_id)
        except Exception as exc:
            logger.warning(
                "cannot load %s (%s); using the seeded offline encoder",
                self.config.model_id,
                exc,
            )
            self._load_fallback()
        self._model.eval()
        limit = getattr(self._model.config, "max_position_embeddings", 512)
        if self.config.max_tokens > limit:
            raise ValueError(
                f"max_tokens {self.config.max_tokens} exceeds encoder positional limit {limit}"
            )

    def _load_fallback(self) -> None:
        from transformers import BertConfig, BertModel

        torch.manual_seed(0)
        self._model = BertModel(
            BertConfig(
                vocab_size=_FALLBACK_VOCAB,
                hidden_size=128,
                num_hidden_layers=2,
                num_attention_heads=4,
                intermediate_size=256,
                max_position_embeddings=512,
            )
        )
        self._hashing = HashingTokenizer()
        self.fallback = True

    @property
    def dim(self) -> int:
        if not self.loaded:
            raise RuntimeError("encoder not loaded")
        return int(self._model.config.hidden_size)

    def _token_ids(self, text: str, max_tokens: int) -> list[int]:
        if self._hashing is not None:
            return self._hashing.encode(text, max_tokens)
        # Truncation keeps the head of the token sequence.
        return self._tokenizer.encode(text, truncation=True, max_length=max_tokens)

    def encode(self, texts: list[str], max_tokens: int | None = None) -> list[list[float]]:
        if not self.loaded:
            raise RuntimeError("encoder not loaded")
        budget = min(max_tokens or self.config.max_tokens, self.config.max_tokens)
        vectors: list[list[float]] = []
        with torch.inference_mode():
            for text in texts:
                ids = torch.tensor([self._token_ids(text, budget)])
                hidden = self._model(input_ids=ids).last_hidden_state[0]
                if self.config.pooling is Pooling.CLS:
                    pooled = hidden[0]
                else:
                    pooled = hidden.mean(dim=0)
                pooled = pooled / torch.linalg.norm(pooled)
                vectors.append([float(v) for v in pooled])
        return vectors
