"""Unit-normalized text embeddings behind a provider contract.

Two providers: a deterministic builtin hashed bag-of-words embedder (so the
whole pipeline runs offline), and an HTTP client for the remote embedding
service (`POST /embed`, `GET /health`).
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from dataclasses import dataclass

import requests

from .corpus import Instance
from .errors import DataError, ProviderError


class KeyMode(enum.Enum):
    TRIPLET = "triplet"
    QA_ONLY = "qa_only"


@dataclass(frozen=True)
class RetrievalKey:
    text: str
    key_mode: KeyMode


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def build_key(instance: Instance, key_mode: KeyMode = KeyMode.TRIPLET) -> RetrievalKey:
    """Concatenate the retrieval key text: introduction, question and answer
    candidate (TRIPLET) or question and answer only (QA_ONLY), newline-joined."""

    if key_mode is KeyMode.TRIPLET:
        text = "\n".join((instance.introduction, instance.question, instance.answer_candidate))
    else:
        text = "\n".join((instance.question, instance.answer_candidate))
    return RetrievalKey(text=text, key_mode=key_mode)


_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs."""

    return _TOKEN.findall(text.lower())


def truncate_tokens(text: str, token_budget: int) -> list[str]:
    return tokenize(text)[:token_budget]


def builtin_embed(text: str, dim: int = 256) -> EmbeddingVector:
    """Deterministic hashed bag-of-words embedding.

    Each token is hashed (md5, platform-independent) to a bucket in
    [0, dim) with a sign bit; term frequencies get sublinear weighting
    1 + log(tf); the result is unit-normalized.
    """

    if dim < 8:
        raise ValueError(f"dim must be >= 8, got {dim}")
    if not text.strip():
        raise DataError("cannot embed empty text")
    tokens = tokenize(text)
    if not tokens:
        raise DataError(f"no tokens after tokenization: {text!r}")
    counts: dict[str, int] = {}
    for tok in tokens:
        counts[tok] = counts.get(tok, 0) + 1
    buckets = [0.0] * dim
    for tok, tf in counts.items():
        digest = hashlib.md5(tok.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        buckets[bucket] += sign * (1.0 + math.log(tf))
    norm = math.sqrt(sum(v * v for v in buckets))
    if norm == 0.0:
        # All-cancelling collisions; nudge a deterministic bucket instead
        # of returning the forbidden zero vector.
        buckets[0] = 1.0
        norm = 1.0
    return EmbeddingVector(values=tuple(v / norm for v in buckets))


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """dot(a, b) / (|a| |b|); equals the dot product for unit vectors."""

    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na, nb = a.norm(), b.norm()
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    return dot / (na * nb)


class EmbeddingProvider:
    """Contract: `embed(text) -> EmbeddingVector`, deterministic per input,
    unit-normalized output, text truncated to `token_budget` first."""

    token_budget: int

    @property
    def fingerprint_parts(self) -> dict:
        raise NotImplementedError

    def embed(self, text: str) -> EmbeddingVector:
        raise NotImplementedError

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


class BuiltinEmbedder(EmbeddingProvider):
    """Pure, stateless, cross-platform stable embedder."""

    def __init__(self, dim: int = 256, token_budget: int = 512):
        if token_budget <= 0:
            raise ValueError("token_budget must be positive")
        self.dim = dim
        self.token_budget = token_budget

    @property
    def fingerprint_parts(self) -> dict:
        return {"kind": "builtin", "dim": self.dim, "token_budget": self.token_budget}

    def embed(self, text: str) -> EmbeddingVector:
        if not text.strip():
            raise DataError("cannot embed empty text")
        # Truncation keeps the head of the text; embed(text) must equal
        # embed(truncate(text, budget)) exactly.
        tokens = truncate_tokens(text, self.token_budget)
        if not tokens:
            raise DataError(f"no tokens after tokenization: {text!r}")
        return builtin_embed(" ".join(tokens), self.dim)


class RemoteEmbedder(EmbeddingProvider):
    """Client for the embedding microservice.

    Protocol: POST `{endpoint}/embed` with `{"texts": [...], "max_tokens": N}`
    returns `{"dim": N, "vectors": [[...], ...]}` (unit-normalized by the
    service); GET `{endpoint}/health` returns `{"status": "ok", "dim": N}`.
    """

    def __init__(self, endpoint: str, token_budget: int = 512, timeout: float = 30.0):
        if token_budget <= 0:
            raise ValueError("token_budget must be positive")
        self.endpoint = endpoint.rstrip("/")
        self.token_budget = token_budget
        self.timeout = timeout
        self._dim: int | None = None

    @property
    def fingerprint_parts(self) -> dict:
        return {"kind": "remote", "endpoint": self.endpoint, "token_budget": self.token_budget}

    def health(self) -> dict:
        try:
            resp = requests.get(f"{self.endpoint}/health", timeout=self.timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderError(f"embedding service unreachable: {exc}") from None
        payload = resp.json()
        if payload.get("status") != "ok":
            raise ProviderError(f"embedding service unhealthy: {json.dumps(payload)}")
        return payload

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        for text in texts:
            if not text.strip():
                raise DataError("cannot embed empty text")
        try:
            resp = requests.post(
                f"{self.endpoint}/embed",
                json={"texts": texts, "max_tokens": self.token_budget},
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderError(f"embedding request failed: {exc}") from None
        payload = resp.json()
        dim = payload.get("dim")
        vectors = payload.get("vectors")
        if not isinstance(dim, int) or not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding service protocol violation: bad response shape")
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise ProviderError(f"embedding service dim changed: {self._dim} -> {dim}")
        out = []
        for vec in vectors:
            if len(vec) != dim:
                raise ProviderError(f"vector length {len(vec)} != dim {dim}")
            out.append(EmbeddingVector(values=tuple(float(v) for v in vec)))
        return out


def embed_text(provider: EmbeddingProvider, key: RetrievalKey) -> EmbeddingVector:
    """Embed a retrieval key; empty text is a precondition violation."""

    if not key.text.strip():
        raise DataError("retrieval key text is empty")
    return provider.embed(key.text)
