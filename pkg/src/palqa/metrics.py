"""SQuAD-style answer scoring and learning-curve aggregation.

Normalization matches the official v1.1 evaluation rules: lowercase, strip
punctuation, drop the articles a/an/the, collapse whitespace.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass

from .backend import Backend, decode_answer
from .data import Dataset

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def token_f1(pred: str, gold: str) -> float:
    """Token-multiset F1 of the normalized strings, in [0, 1].

    Both empty after normalization scores 1.0; exactly one empty scores 0.0.
    """
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


@dataclass(frozen=True)
class EvalResult:
    f1: float  # [0, 100]
    em: float  # [0, 100]
    n_examples: int

    def __post_init__(self):
        assert 0.0 <= self.f1 <= 100.0 and 0.0 <= self.em <= 100.0


def evaluate(backend: Backend, eval_set: Dataset, max_span_tokens: int = 30) -> EvalResult:
    """Mean token F1 and exact match of decoded predictions, scaled to [0, 100]."""
    if len(eval_set) == 0:
        raise ValueError("evaluation set is empty")
    f1_total = 0.0
    em_total = 0
    for inst in eval_set:
        dist = backend.predict(inst.question, inst.context)
        span = decode_answer(dist, inst.context, max_span_tokens)
        f1_total += token_f1(span.text, inst.gold_answer_text)
        em_total += exact_match(span.text, inst.gold_answer_text)
    n = len(eval_set)
    return EvalResult(f1=100.0 * f1_total / n, em=100.0 * em_total / n, n_examples=n)


class LearningCurve:
    """Ordered (step_label, f1) checkpoints with strictly increasing labels."""

    def __init__(self, checkpoints):
        self.checkpoints = [(int(s), float(f)) for s, f in checkpoints]
        labels = [s for s, _ in self.checkpoints]
        if any(a >= b for a, b in zip(labels, labels[1:])):
            raise ValueError(f"step labels must strictly increase, got {labels}")

    def __len__(self) -> int:
        return len(self.checkpoints)

    @property
    def steps(self) -> list[int]:
        return [s for s, _ in self.checkpoints]

    @property
    def f1_values(self) -> list[float]:
        return [f for _, f in self.checkpoints]


def auc(curve: LearningCurve) -> float:
    """Arithmetic mean of the checkpoint F1 values.

    Depends only on the F1 values, never on the step labels. Full precision;
    round to one decimal for display.
    """
    if len(curve) == 0:
        raise ValueError("cannot aggregate an empty curve")
    values = curve.f1_values
    return sum(values) / len(values)


def display_auc(value: float) -> str:
    return f"{value:.1f}"
