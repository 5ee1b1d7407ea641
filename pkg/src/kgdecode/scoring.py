"""Question/path similarity scoring and the s₊/s₋ partition.

Paths are embedded next to the question; cosine similarity ranks them, the
top scorer becomes the masking candidate, and a threshold policy splits the
set into a high-scoring plus-set and the low-scoring remainder.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from hashlib import blake2b
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import DatasetError, EmbeddingError, EmptyPathSetError, ProviderError
from .kg import Path

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class QuestionInstance:
    """One dataset row: a question, its topic entities, and (for evaluation
    only) the gold answers."""

    id: str
    question: str
    topic_entities: tuple[str, ...]
    gold_answers: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.question:
            raise DatasetError(f"question {self.id!r} has empty text")
        if not self.topic_entities:
            raise DatasetError(f"question {self.id!r} has no topic entities")


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Pluggable sentence embedder; rows should come back L2-normalized."""

    @property
    def dim(self) -> int: ...

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedBagEmbedder:
    """Deterministic reference embedder: lowercase, split on non-alphanumerics,
    hash each token into `dim` buckets, count, L2-normalize.

    Dependency-free and order-insensitive, like real sentence embeddings, and
    stable across processes (blake2b bucketing, not the builtin hash).
    """

    def __init__(self, dim: int = 256):
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def _bucket(self, token: str) -> int:
        digest = blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self._dim

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self._dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                # texts with no alphanumeric content hash as a single unit
                tokens = [text]
            for token in tokens:
                out[row, self._bucket(token)] += 1.0
            out[row] /= np.linalg.norm(out[row])
        return out


class HttpEmbeddingClient:
    """Client for an external embedding service.

    POSTs {"texts": [...]} and expects {"vectors": [[...], ...]}; responses
    are re-normalized defensively. Connection failures are retried up to
    `retries` times and surface as retryable ProviderErrors.
    """

    def __init__(
        self,
        url: str,
        dim: int,
        timeout: float = 10.0,
        retries: int = 2,
        transport=None,
    ):
        self.url = url
        self._dim = dim
        self.timeout = timeout
        self.retries = retries
        self._transport = transport

    @property
    def dim(self) -> int:
        return self._dim

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        import httpx

        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                with httpx.Client(timeout=self.timeout, transport=self._transport) as client:
                    response = client.post(self.url, json={"texts": list(texts)})
                response.raise_for_status()
                payload = response.json()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(0.1 * (attempt + 1))
        else:
            raise ProviderError(f"embedding service unreachable: {last_exc}", retryable=True)
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderError("embedding service returned a malformed payload", retryable=False)
        out = np.asarray(vectors, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self._dim:
            raise ProviderError(
                f"embedding service returned shape {out.shape}, expected (n, {self._dim})",
                retryable=False,
            )
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ProviderError("embedding service returned a zero vector", retryable=False)
        return out / norms


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed one text; the result is unit-norm (1 ± 1e-6) and deterministic
    per provider."""
    if not text:
        raise EmbeddingError("cannot embed empty text")
    vector = np.asarray(provider.embed_batch([text])[0], dtype=np.float64)
    norm = float(np.linalg.norm(vector))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError(f"provider returned a degenerate vector for {text!r}")
    return vector / norm


@dataclass(frozen=True)
class ThresholdPolicy:
    """How the plus-set is selected from score-sorted entries."""

    mode: str = "top1"  # "top1" | "topk" | "min-score"
    k: int = 1
    min_score: float = 0.0

    def plus_indexes(self, scores: Sequence[float]) -> list[int]:
        if self.mode == "top1":
            return [0] if scores else []
        if self.mode == "topk":
            return list(range(min(self.k, len(scores))))
        if self.mode == "min-score":
            return [i for i, s in enumerate(scores) if s >= self.min_score]
        raise ValueError(f"unknown threshold policy mode {self.mode!r}")


@dataclass(frozen=True)
class ScoredPath:
    text: str
    score: float
    path: Path | None = None


@dataclass(frozen=True)
class ScoredPathSet:
    """Score-sorted paths with the plus/minus partition.

    Entries are sorted by (score descending, text ascending); plus_set and
    minus_set index into `entries` and partition it.
    """

    entries: tuple[ScoredPath, ...]
    top1_index: int
    plus_set: tuple[int, ...]
    minus_set: tuple[int, ...]

    @property
    def top1(self) -> ScoredPath:
        return self.entries[self.top1_index]

    def to_jsonl(self) -> str:
        import json

        return "".join(
            json.dumps({"path": e.text, "score": e.score}) + "\n" for e in self.entries
        )


def score_paths(
    provider: EmbeddingProvider,
    q: QuestionInstance,
    paths: Sequence[tuple[Path | None, str]],
    policy: ThresholdPolicy = ThresholdPolicy(),
) -> ScoredPathSet:
    """Cosine-score every path text against the question and partition.

    The top-1 entry is the argmax with ties broken by lexicographic path
    text; input order never affects the result.
    """
    if not paths:
        raise EmptyPathSetError(f"question {q.id!r} has no legal reasoning paths")
    texts = [text for _, text in paths]
    vectors = provider.embed_batch([q.question] + texts)
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise EmbeddingError("provider returned a zero vector")
    vectors = vectors / norms
    scores = np.clip(vectors[1:] @ vectors[0], -1.0, 1.0)

    order = sorted(range(len(paths)), key=lambda i: (-scores[i], texts[i]))
    entries = tuple(
        ScoredPath(text=texts[i], score=float(scores[i]), path=paths[i][0]) for i in order
    )
    plus = tuple(policy.plus_indexes([e.score for e in entries]))
    minus = tuple(i for i in range(len(entries)) if i not in set(plus))
    return ScoredPathSet(entries=entries, top1_index=0, plus_set=plus, minus_set=minus)
