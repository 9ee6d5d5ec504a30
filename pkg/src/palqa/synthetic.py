"""Deterministic synthetic backend for desk-scale verification.

No learning happens here in any statistical sense; the backend is a fixture
with three properties the engine's tests lean on:

* embeddings are L2-normalized 64-bucket hashed token counts, so texts with
  shared vocabulary land close together and disjoint vocabularies land far
  apart;
* span probabilities come from a softmax over per-token logits built from
  lexical overlap with the question, with the affinity of a question token
  split evenly across its occurrences in the context. Repeating a question
  token (for example inside an appended distractor sentence) dilutes the
  logit of the original occurrence, which is what makes un-memorized
  instances measurably sensitive to distractors;
* fine_tune memorizes gold spans per context and boosts their start/end
  logits. Memorized contexts are recognized by exact match or as a prefix
  of a longer context, so appending a distractor does not erase memory.

Everything is a pure function of (seed, call history), bit-for-bit.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from typing import Sequence

import numpy as np

from .backend import Backend, SpanDistribution, Token, tokenize
from .data import QAInstance

EMBED_DIM = 64
AFFINITY_WEIGHT = 2.0
MEMORY_BOOST = 4.0


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def token_span_for_chars(
    tokens: Sequence[Token], char_start: int, char_end: int
) -> tuple[int, int] | None:
    """Token index range covering [char_start, char_end), or None if no overlap."""
    start_tok = end_tok = None
    for i, tok in enumerate(tokens):
        if tok.char_end > char_start and start_tok is None:
            start_tok = i
        if tok.char_start < char_end:
            end_tok = i
    if start_tok is None or end_tok is None or end_tok < start_tok:
        return None
    return start_tok, end_tok


class SyntheticBackend(Backend):
    """Hash-embedding, lexical-affinity backend; deterministic per seed."""

    name = "synthetic"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._t = 0
        # context string -> (gold start token, gold end token)
        self._memory: dict[str, tuple[int, int]] = {}
        self.name = f"synthetic:{self.seed}"

    @property
    def dim(self) -> int:
        return EMBED_DIM

    @property
    def t(self) -> int:
        return self._t

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(
            f"{self.seed}:{token}".encode("utf-8"), digest_size=8
        ).digest()
        return int.from_bytes(digest, "big") % EMBED_DIM

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("embed requires non-empty text")
        vec = np.zeros(EMBED_DIM, dtype=np.float64)
        for tok in tokens:
            vec[self._bucket(tok.text.lower())] += 1.0
        return vec / np.linalg.norm(vec)

    def _find_memorized_span(self, context: str) -> tuple[int, int] | None:
        hit = self._memory.get(context)
        if hit is not None:
            return hit
        # a memorized context extended by appended text keeps its gold span
        best_key = None
        for key in self._memory:
            if len(key) < len(context) and context.startswith(key):
                if best_key is None or len(key) > len(best_key):
                    best_key = key
        return self._memory[best_key] if best_key is not None else None

    def predict(self, question: str, context: str) -> SpanDistribution:
        if not question.strip():
            raise ValueError("predict requires a non-empty question")
        tokens = tokenize(context)
        if not tokens:
            raise ValueError("context tokenizes to zero tokens")
        lowered = [tok.text.lower() for tok in tokens]
        question_vocab = {tok.text.lower() for tok in tokenize(question)}
        counts = Counter(lowered)
        affinity = np.array(
            [
                AFFINITY_WEIGHT / counts[w] if w in question_vocab else 0.0
                for w in lowered
            ],
            dtype=np.float64,
        )
        start_logits = affinity.copy()
        end_logits = affinity.copy()
        memorized = self._find_memorized_span(context)
        if memorized is not None:
            s, e = memorized
            if s < len(tokens):
                start_logits[s] += MEMORY_BOOST
            if e < len(tokens):
                end_logits[e] += MEMORY_BOOST
        return SpanDistribution(
            start_probs=_softmax(start_logits),
            end_probs=_softmax(end_logits),
            token_offsets=[(tok.char_start, tok.char_end) for tok in tokens],
        ).validate()

    def fine_tune(self, labeled: Sequence[QAInstance]) -> int:
        if not labeled:
            raise ValueError("fine_tune requires a non-empty batch")
        for inst in labeled:
            tokens = tokenize(inst.context)
            span = token_span_for_chars(
                tokens,
                inst.gold_answer_char_start,
                inst.gold_answer_char_start + len(inst.gold_answer_text),
            )
            if span is not None:
                self._memory[inst.context] = span
        self._t += 1
        return self._t
