"""Model-backend contract: embeddings, span distributions, and answer decoding.

Every backend emits per-token start/end probabilities together with the
character offsets of its own tokens, so the engine never assumes a
tokenizer. The primary tokenizer here is whitespace-based with punctuation
split off; adapters are free to use subword tokenizers as long as they
report offsets into the raw context.
"""

from __future__ import annotations

import re
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import QAInstance

#: word runs, or single punctuation characters, with offsets into the raw text
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int
    char_end: int


def tokenize(text: str) -> list[Token]:
    """Whitespace tokenization with punctuation split into separate tokens.

    Offsets index the raw input, so appending whitespace-separated text
    never disturbs the offsets of existing tokens.
    """
    return [
        Token(m.group(0), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)
    ]


@dataclass
class SpanDistribution:
    """Per-token start and end probabilities over a context tokenization."""

    start_probs: np.ndarray
    end_probs: np.ndarray
    token_offsets: list[tuple[int, int]]

    def __post_init__(self):
        self.start_probs = np.asarray(self.start_probs, dtype=np.float64)
        self.end_probs = np.asarray(self.end_probs, dtype=np.float64)
        self.token_offsets = [(int(s), int(e)) for s, e in self.token_offsets]

    def validate(self) -> "SpanDistribution":
        n = len(self.token_offsets)
        if n < 1:
            raise ValueError("span distribution needs at least one token")
        if len(self.start_probs) != n or len(self.end_probs) != n:
            raise ValueError(
                f"length mismatch: {len(self.start_probs)} start probs, "
                f"{len(self.end_probs)} end probs, {n} token offsets"
            )
        for name, probs in (("start", self.start_probs), ("end", self.end_probs)):
            if np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise ValueError(f"{name} probabilities must be finite and >= 0")
            if abs(float(probs.sum()) - 1.0) > 1e-6:
                raise ValueError(f"{name} probabilities sum to {probs.sum()}, not 1")
        prev_end = -1
        for s, e in self.token_offsets:
            if s < prev_end or e <= s:
                raise ValueError("token offsets must be ascending and non-overlapping")
            prev_end = e
        return self

    def __len__(self) -> int:
        return len(self.token_offsets)


@dataclass(frozen=True)
class ModelHandle:
    """Snapshot of a backend's identity for logs: name, iteration, dimension."""

    backend: str
    t: int
    dim: int


@dataclass(frozen=True)
class AnswerSpan:
    token_start: int
    token_end: int
    score: float
    text: str


def decode_answer(
    dist: SpanDistribution, context: str, max_span_tokens: int = 30
) -> AnswerSpan:
    """Pick the answer span maximizing start_probs[i] + end_probs[j].

    Considers all pairs with i <= j and j - i < max_span_tokens. Ties break
    toward the smaller start index, then the smaller end index. The span
    text is cut from the context via the token offsets.
    """
    if max_span_tokens < 1:
        raise ValueError("max_span_tokens must be >= 1")
    start = dist.start_probs
    end = dist.end_probs
    n = len(start)
    best_i = best_j = 0
    best = -np.inf
    for i in range(n):
        hi = min(n, i + max_span_tokens)
        # argmax over j in [i, hi); ties keep the earliest j
        window = end[i:hi]
        j_rel = int(np.argmax(window))
        score = float(start[i] + window[j_rel])
        if score > best:
            best = score
            best_i, best_j = i, i + j_rel
    char_s = dist.token_offsets[best_i][0]
    char_e = dist.token_offsets[best_j][1]
    return AnswerSpan(
        token_start=best_i,
        token_end=best_j,
        score=best,
        text=context[char_s:char_e],
    )


class Backend(ABC):
    """Contract every model backend fulfils.

    embed and predict are read-only and deterministic for a fixed iteration
    index; fine_tune is exclusive and bumps the iteration index by one.
    """

    name: str = "backend"

    @property
    @abstractmethod
    def dim(self) -> int:
        """Embedding dimension."""

    @property
    @abstractmethod
    def t(self) -> int:
        """Fine-tuning iteration index, non-decreasing."""

    @abstractmethod
    def embed(self, text: str) -> np.ndarray:
        """Fixed-length representation of a text. Deterministic per (t, text)."""

    @abstractmethod
    def predict(self, question: str, context: str) -> SpanDistribution:
        """Start/end probabilities over the context tokens."""

    @abstractmethod
    def fine_tune(self, labeled: Sequence[QAInstance]) -> int:
        """Continue training on a labeled batch; returns the new iteration index."""

    def handle(self) -> ModelHandle:
        return ModelHandle(backend=self.name, t=self.t, dim=self.dim)
