"""Word-level tokenizer with character offsets and a hashed vocabulary.

Words and single punctuation marks become tokens; ids come from a stable
hash into a fixed-size vocabulary, so no pretrained vocab file is needed
and any text maps to ids deterministically.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

VOCAB_SIZE = 4096
CLS_ID = 0
SEP_ID = 1
_RESERVED = 2

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class TokenizedText:
    ids: list[int]
    offsets: list[tuple[int, int]]  # (char_start, char_end) per token


def token_id(token: str) -> int:
    digest = hashlib.blake2b(token.lower().encode("utf-8"), digest_size=8).digest()
    return _RESERVED + int.from_bytes(digest, "big") % (VOCAB_SIZE - _RESERVED)


def tokenize(text: str) -> TokenizedText:
    ids = []
    offsets = []
    for m in _TOKEN_RE.finditer(text):
        ids.append(token_id(m.group(0)))
        offsets.append((m.start(), m.end()))
    return TokenizedText(ids=ids, offsets=offsets)


def align_answer(
    offsets: list[tuple[int, int]], char_start: int, char_end: int
) -> tuple[int, int] | None:
    """Token index range covering [char_start, char_end), None if not alignable."""
    start_tok = end_tok = None
    for i, (s, e) in enumerate(offsets):
        if e > char_start and start_tok is None:
            start_tok = i
        if s < char_end:
            end_tok = i
    if start_tok is None or end_tok is None or end_tok < start_tok:
        return None
    return start_tok, end_tok
