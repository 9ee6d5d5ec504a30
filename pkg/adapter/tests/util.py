"""Self-contained helpers: a raw protocol client, a learnable synthetic QA
task, and minimal span decoding / F1 scoring (no engine imports)."""

from __future__ import annotations

import json
import subprocess
import sys

import numpy as np


class RawAdapter:
    """Line-oriented protocol client over an adapter child process."""

    def __init__(self, *extra_args: str):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "palqa_adapter.serve", *extra_args],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        self._next = 0

    def call(self, op: str, **payload) -> dict:
        rid = self._next
        self._next += 1
        self.proc.stdin.write(json.dumps({"id": rid, "op": op, **payload}) + "\n")
        self.proc.stdin.flush()
        response = json.loads(self.proc.stdout.readline())
        assert response["id"] == rid, f"id mismatch: sent {rid}, got {response['id']}"
        return response

    def close(self):
        self.proc.stdin.close()
        self.proc.terminate()
        self.proc.wait(timeout=10)


VOCAB = [f"v{k:03d}" for k in range(200)]


def marker_task(n: int, seed: int) -> list[dict]:
    """Contexts of distinct words with one 'marker'; the answer is the two
    words right after it. Learnable from scratch, unseen contexts included."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        words = list(rng.choice(VOCAB, size=10, replace=False))
        m = int(rng.integers(1, 7))
        words[m] = "marker"
        context = " ".join(words) + "."
        answer = f"{words[m + 1]} {words[m + 2]}"
        out.append(
            {
                "id": f"{seed}-{i}",
                "question": "which words follow the marker",
                "context": context,
                "answer_text": answer,
                "answer_start": context.index(words[m + 1]),
            }
        )
    return out


def decode_span(response: dict, context: str, max_span: int = 30) -> tuple[str, float]:
    """Best (start + end) span from a predict response; returns (text, score)."""
    start, end = response["start_probs"], response["end_probs"]
    offsets = response["token_offsets"]
    best = (-1.0, 0, 0)
    for i in range(len(start)):
        for j in range(i, min(len(start), i + max_span)):
            score = start[i] + end[j]
            if score > best[0]:
                best = (score, i, j)
    _, i, j = best
    return context[offsets[i][0] : offsets[j][1]], best[0]


def token_f1(pred: str, gold: str) -> float:
    p, g = pred.lower().split(), gold.lower().split()
    if not p or not g:
        return float(p == g)
    common = sum(min(p.count(w), g.count(w)) for w in set(p))
    if common == 0:
        return 0.0
    precision, recall = common / len(p), common / len(g)
    return 2 * precision * recall / (precision + recall)


def mean_f1(adapter: RawAdapter, examples: list[dict]) -> float:
    total = 0.0
    for ex in examples:
        response = adapter.call("predict", question=ex["question"], context=ex["context"])
        text, _ = decode_span(response, ex["context"])
        total += token_f1(text, ex["answer_text"])
    return 100.0 * total / len(examples)
