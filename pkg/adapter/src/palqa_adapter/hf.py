"""Pretrained-encoder variant of the span service via the transformers
library. Requires model assets to be present locally (or a reachable hub).
"""

from __future__ import annotations

import sys

import torch
import torch.nn.functional as F

from .service import AdapterError


class HFSpanService:
    def __init__(self, name_or_path: str, device: str = "cpu", epochs: int = 2,
                 lr: float = 3e-5, batch_size: int = 12, max_len: int = 384,
                 log=sys.stderr):
        try:
            from transformers import AutoModelForQuestionAnswering, AutoTokenizer
        except ImportError as e:
            raise AdapterError(f"transformers not installed: {e}") from e
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(name_or_path, use_fast=True)
            self.model = AutoModelForQuestionAnswering.from_pretrained(name_or_path)
        except OSError as e:
            raise AdapterError(
                f"model assets for {name_or_path!r} unavailable: {e}"
            ) from e
        self.device = torch.device(device)
        self.model.to(self.device)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=lr)
        self.epochs = epochs
        self.batch_size = batch_size
        self.max_len = max_len
        self.t = 0
        self.log = log

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    @torch.no_grad()
    def embed(self, text: str) -> list[float]:
        if not text.strip():
            raise AdapterError("embed requires non-empty text")
        self.model.eval()
        enc = self.tokenizer(text, truncation=True, max_length=self.max_len,
                             return_tensors="pt").to(self.device)
        hidden = self.model.base_model(**enc).last_hidden_state
        return hidden[0, 0].cpu().double().tolist()

    def _encode(self, question: str, context: str):
        enc = self.tokenizer(
            question,
            context,
            truncation="only_second",
            max_length=self.max_len,
            return_offsets_mapping=True,
            return_tensors="pt",
        )
        offsets = enc.pop("offset_mapping")[0].tolist()
        sequence_ids = enc.sequence_ids(0)
        ctx_positions = [i for i, s in enumerate(sequence_ids) if s == 1]
        return enc.to(self.device), offsets, ctx_positions

    @torch.no_grad()
    def predict(self, question: str, context: str) -> dict:
        if not question.strip() or not context.strip():
            raise AdapterError("predict requires non-empty question and context")
        self.model.eval()
        enc, offsets, ctx_positions = self._encode(question, context)
        if not ctx_positions:
            raise AdapterError("context tokenizes to zero tokens")
        out = self.model(**enc)
        idx = torch.tensor(ctx_positions, device=self.device)
        start = F.softmax(out.start_logits[0, idx].double(), dim=0)
        end = F.softmax(out.end_logits[0, idx].double(), dim=0)
        return {
            "start_probs": start.cpu().tolist(),
            "end_probs": end.cpu().tolist(),
            "token_offsets": [list(offsets[i]) for i in ctx_positions],
        }

    def fine_tune(self, instances: list[dict]) -> dict:
        if not instances:
            raise AdapterError("fine_tune requires a non-empty batch")
        prepared = []
        skipped = []
        for inst in instances:
            enc, offsets, ctx_positions = self._encode(inst["question"], inst["context"])
            char_start = int(inst["answer_start"])
            char_end = char_start + len(inst["answer_text"])
            start_tok = end_tok = None
            for i in ctx_positions:
                s, e = offsets[i]
                if e > char_start and start_tok is None:
                    start_tok = i
                if s < char_end:
                    end_tok = i
            if start_tok is None or end_tok is None or end_tok < start_tok:
                skipped.append(inst["id"])
                continue
            prepared.append((enc, start_tok, end_tok))

        if prepared:
            self.model.train()
            for _ in range(self.epochs):
                for enc, s_tok, e_tok in prepared:  # per-example; batches vary in shape
                    out = self.model(
                        **enc,
                        start_positions=torch.tensor([s_tok], device=self.device),
                        end_positions=torch.tensor([e_tok], device=self.device),
                    )
                    self.optimizer.zero_grad()
                    out.loss.backward()
                    self.optimizer.step()
        self.t += 1
        return {"t": self.t, "skipped": skipped}
