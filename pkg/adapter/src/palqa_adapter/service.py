"""Request handlers: embed, predict, fine_tune over the span model.

One service instance owns the model, the optimizer (so fine-tuning truly
continues rather than restarting), and the step counter.
"""

from __future__ import annotations

import sys

import torch
import torch.nn.functional as F

from .model import TinySpanModel
from .tokenizer import CLS_ID, SEP_ID, align_answer, tokenize


class AdapterError(ValueError):
    """Bad request arguments; reported to the client, the process stays up."""


class SpanService:
    def __init__(self, model: TinySpanModel, device: str = "cpu",
                 epochs: int = 2, lr: float = 3e-4, batch_size: int = 16,
                 log=sys.stderr):
        self.device = torch.device(device)
        self.model = model.to(self.device)
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=lr)
        self.epochs = epochs
        self.batch_size = batch_size
        self.t = 0
        self.log = log

    @property
    def dim(self) -> int:
        return self.model.hidden

    # ---- sequence assembly -------------------------------------------------

    def _assemble(self, question_ids: list[int], context_ids: list[int],
                  context_offsets: list[tuple[int, int]]):
        """[CLS] question [SEP] context [SEP], truncating the context to the
        encoder window. Returns (ids, segments, context_slice, kept_offsets)."""
        max_len = self.model.max_len
        q = question_ids[: max_len - 4]
        budget = max_len - 3 - len(q)
        if budget < 1:
            raise AdapterError("question leaves no room for context tokens")
        if len(context_ids) > budget:
            print(
                f"adapter: truncating context from {len(context_ids)} "
                f"to {budget} tokens",
                file=self.log,
            )
        c = context_ids[:budget]
        kept = context_offsets[:budget]
        ids = [CLS_ID] + q + [SEP_ID] + c + [SEP_ID]
        ctx_lo = 2 + len(q)
        segments = [0] * ctx_lo + [1] * (len(c) + 1)
        return ids, segments, (ctx_lo, ctx_lo + len(c)), kept

    def _batch(self, rows: list[tuple[list[int], list[int]]]):
        width = max(len(ids) for ids, _ in rows)
        ids = torch.zeros(len(rows), width, dtype=torch.long)
        segments = torch.zeros(len(rows), width, dtype=torch.long)
        pad = torch.ones(len(rows), width, dtype=torch.bool)
        for r, (row_ids, row_segments) in enumerate(rows):
            ids[r, : len(row_ids)] = torch.tensor(row_ids)
            segments[r, : len(row_segments)] = torch.tensor(row_segments)
            pad[r, : len(row_ids)] = False
        return ids.to(self.device), segments.to(self.device), pad.to(self.device)

    # ---- ops ----------------------------------------------------------------

    @torch.no_grad()
    def embed(self, text: str) -> list[float]:
        if not text.strip():
            raise AdapterError("embed requires non-empty text")
        tokens = tokenize(text)
        if not tokens.ids:
            raise AdapterError("text tokenizes to zero tokens")
        body = tokens.ids[: self.model.max_len - 2]
        ids = [CLS_ID] + body + [SEP_ID]
        segments = [0] * len(ids)
        self.model.eval()
        batch = self._batch([(ids, segments)])
        hidden, _ = self.model(*batch)
        return hidden[0, 0].cpu().tolist()

    @torch.no_grad()
    def predict(self, question: str, context: str) -> dict:
        if not question.strip() or not context.strip():
            raise AdapterError("predict requires non-empty question and context")
        q = tokenize(question)
        c = tokenize(context)
        if not c.ids:
            raise AdapterError("context tokenizes to zero tokens")
        ids, segments, (lo, hi), kept = self._assemble(q.ids, c.ids, c.offsets)
        self.model.eval()
        batch = self._batch([(ids, segments)])
        _, logits = self.model(*batch)
        span = logits[0, lo:hi]  # context positions only
        start = F.softmax(span[:, 0].double(), dim=0)
        end = F.softmax(span[:, 1].double(), dim=0)
        return {
            "start_probs": start.cpu().tolist(),
            "end_probs": end.cpu().tolist(),
            "token_offsets": [list(o) for o in kept],
        }

    def fine_tune(self, instances: list[dict]) -> dict:
        if not instances:
            raise AdapterError("fine_tune requires a non-empty batch")
        rows = []
        skipped = []
        for inst in instances:
            q = tokenize(inst["question"])
            c = tokenize(inst["context"])
            if not c.ids:
                skipped.append(inst["id"])
                continue
            char_start = int(inst["answer_start"])
            char_end = char_start + len(inst["answer_text"])
            span = align_answer(c.offsets, char_start, char_end)
            if span is None:
                skipped.append(inst["id"])
                continue
            ids, segments, (lo, hi), _ = self._assemble(q.ids, c.ids, c.offsets)
            start_pos, end_pos = lo + span[0], lo + span[1]
            if start_pos >= hi or end_pos >= hi:  # answer truncated away
                skipped.append(inst["id"])
                continue
            rows.append((ids, segments, lo, hi, start_pos, end_pos))

        if rows:
            self._train(rows)
        self.t += 1
        return {"t": self.t, "skipped": skipped}

    def _train(self, rows) -> None:
        self.model.train()
        for _ in range(self.epochs):
            for lo_idx in range(0, len(rows), self.batch_size):
                chunk = rows[lo_idx : lo_idx + self.batch_size]
                ids, segments, pad = self._batch(
                    [(r[0], r[1]) for r in chunk]
                )
                _, logits = self.model(ids, segments, pad)
                # positions outside each row's context slice never get mass
                mask = torch.full(logits.shape[:2], float("-inf"), device=self.device)
                starts = torch.zeros(len(chunk), dtype=torch.long, device=self.device)
                ends = torch.zeros(len(chunk), dtype=torch.long, device=self.device)
                for r, (_, _, lo, hi, s_pos, e_pos) in enumerate(chunk):
                    mask[r, lo:hi] = 0.0
                    starts[r] = s_pos
                    ends[r] = e_pos
                loss = F.cross_entropy(logits[:, :, 0] + mask, starts) + F.cross_entropy(
                    logits[:, :, 1] + mask, ends
                )
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()


def build_service(model_spec: str, device: str, epochs: int, lr: float,
                  batch_size: int, max_len: int) -> SpanService:
    """"tiny:<seed>" builds the self-contained model; "hf:<name-or-path>"
    wraps a pretrained encoder via the transformers library."""
    if model_spec.startswith("tiny"):
        seed = int(model_spec.split(":", 1)[1]) if ":" in model_spec else 0
        torch.manual_seed(seed)
        model = TinySpanModel(max_len=max_len)
        return SpanService(model, device=device, epochs=epochs, lr=lr,
                           batch_size=batch_size)
    if model_spec.startswith("hf:"):
        from .hf import HFSpanService  # deferred: transformers is optional

        return HFSpanService(model_spec[3:], device=device, epochs=epochs,
                             lr=lr, batch_size=batch_size, max_len=max_len)
    raise AdapterError(
        f"unknown model spec {model_spec!r}; expected tiny:<seed> or hf:<name-or-path>"
    )
