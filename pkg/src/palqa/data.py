"""SQuAD-format ingestion, one-pair-per-context subsetting, and the labeling oracle.

The dataset is the unit of truth for an experiment: every pool id refers into
it, and its stored gold answers stand in for the human annotator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterator, Sequence


class SquadParseError(ValueError):
    """Raised when the input is not well-formed SQuAD v1.1 JSON."""


class DatasetValidationError(ValueError):
    """Raised when a record violates a dataset invariant (named by qa id)."""


@dataclass(frozen=True)
class QAInstance:
    """One question/context/gold-answer triple.

    The gold answer must occur in the context exactly at the stored
    character offset (Unicode scalar offset, 0-based).
    """

    id: str
    question: str
    context: str
    gold_answer_text: str
    gold_answer_char_start: int

    def __post_init__(self):
        if not self.question.strip():
            raise DatasetValidationError(f"{self.id}: empty question")
        if not self.context.strip():
            raise DatasetValidationError(f"{self.id}: empty context")
        s = self.gold_answer_char_start
        e = s + len(self.gold_answer_text)
        if s < 0 or self.context[s:e] != self.gold_answer_text:
            raise DatasetValidationError(
                f"{self.id}: answer text does not match context at offset {s}"
            )


class Dataset:
    """Ordered, immutable collection of QAInstances with unique ids."""

    def __init__(self, instances: Sequence[QAInstance]):
        self._instances = tuple(instances)
        self._by_id = {}
        for inst in self._instances:
            if inst.id in self._by_id:
                raise DatasetValidationError(f"duplicate instance id: {inst.id}")
            self._by_id[inst.id] = inst

    def __len__(self) -> int:
        return len(self._instances)

    def __iter__(self) -> Iterator[QAInstance]:
        return iter(self._instances)

    @property
    def instances(self) -> tuple[QAInstance, ...]:
        return self._instances

    def ids(self) -> list[str]:
        return [i.id for i in self._instances]

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._by_id

    def get(self, instance_id: str) -> QAInstance:
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise KeyError(f"unknown instance id: {instance_id}") from None


def _repair_answer_start(context: str, answer: str, start: int) -> int | None:
    """Search for the answer within +-5 characters of the stated start.

    SQuAD files carry occasional off-by-bytes offsets; the nearest exact
    occurrence wins. Returns None when no window position matches.
    """
    for delta in sorted(range(-5, 6), key=lambda d: (abs(d), d)):
        s = start + delta
        if s < 0:
            continue
        if context[s : s + len(answer)] == answer:
            return s
    return None


def parse_squad(raw: bytes | str | IO[bytes]) -> Dataset:
    """Parse a SQuAD v1.1 JSON payload into a Dataset.

    One instance per (question, first answer) pair, in file order. Ids are
    "<article_index>-<paragraph_index>-<qa_id>". Character offsets are
    validated against the context, with a +-5 character repair pass for the
    common off-by-bytes artifacts.
    """
    if hasattr(raw, "read"):
        raw = raw.read()
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    else:
        text = raw
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        byte_offset = len(text[: e.pos].encode("utf-8"))
        raise SquadParseError(
            f"malformed SQuAD JSON at byte offset {byte_offset}: {e.msg}"
        ) from e

    try:
        articles = payload["data"]
    except (TypeError, KeyError):
        raise SquadParseError("top-level 'data' list missing") from None

    instances = []
    for ai, article in enumerate(articles):
        for pi, paragraph in enumerate(article["paragraphs"]):
            context = paragraph["context"]
            for qa in paragraph["qas"]:
                qa_id = qa["id"]
                answers = qa.get("answers") or []
                if not answers:
                    raise DatasetValidationError(f"{qa_id}: no answers")
                answer = answers[0]
                ans_text = answer["text"]
                ans_start = int(answer["answer_start"])
                if context[ans_start : ans_start + len(ans_text)] != ans_text:
                    repaired = _repair_answer_start(context, ans_text, ans_start)
                    if repaired is None:
                        raise DatasetValidationError(
                            f"{qa_id}: answer_start {ans_start} does not match "
                            f"answer text in context"
                        )
                    ans_start = repaired
                instances.append(
                    QAInstance(
                        id=f"{ai}-{pi}-{qa_id}",
                        question=qa["question"],
                        context=context,
                        gold_answer_text=ans_text,
                        gold_answer_char_start=ans_start,
                    )
                )
    return Dataset(instances)


def subset_one_per_context(d: Dataset) -> Dataset:
    """Keep only the first instance (in dataset order) of each distinct context."""
    seen: set[str] = set()
    kept = []
    for inst in d:
        if inst.context not in seen:
            seen.add(inst.context)
            kept.append(inst)
    return Dataset(kept)


def oracle_label(instance_id: str, d: Dataset) -> tuple[str, int]:
    """Return the stored gold answer for an id, simulating the annotator.

    Pure lookup; raises KeyError for unknown ids.
    """
    inst = d.get(instance_id)
    return inst.gold_answer_text, inst.gold_answer_char_start


# Dump format: one record per line, tab-separated
# (id, question, context, answer, char_start). Literal backslashes, tabs,
# newlines and carriage returns in text are escaped as \\, \t, \n, \r so the
# format stays line- and field-safe and round-trips exactly.

_ESCAPES = [("\\", "\\\\"), ("\t", "\\t"), ("\n", "\\n"), ("\r", "\\r")]


def _escape(field: str) -> str:
    for raw, esc in _ESCAPES:
        field = field.replace(raw, esc)
    return field


def _unescape(field: str) -> str:
    out = []
    it = iter(range(len(field)))
    i = 0
    while i < len(field):
        ch = field[i]
        if ch == "\\" and i + 1 < len(field):
            nxt = field[i + 1]
            mapped = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt)
            if mapped is not None:
                out.append(mapped)
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def dump_dataset(d: Dataset, path) -> None:
    """Write the tab-separated dump format used by tests and wire payloads."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in d:
            fields = [
                inst.id,
                inst.question,
                inst.context,
                inst.gold_answer_text,
                str(inst.gold_answer_char_start),
            ]
            fh.write("\t".join(_escape(f) for f in fields[:4]) + "\t" + fields[4] + "\n")


def load_dump(path) -> Dataset:
    """Read a dataset back from the tab-separated dump format."""
    instances = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise DatasetValidationError(
                    f"dump line {lineno}: expected 5 fields, got {len(parts)}"
                )
            qid, question, context, answer = (_unescape(p) for p in parts[:4])
            instances.append(
                QAInstance(
                    id=qid,
                    question=question,
                    context=context,
                    gold_answer_text=answer,
                    gold_answer_char_start=int(parts[4]),
                )
            )
    return Dataset(instances)
