"""Encoder with a span-prediction head.

The default "tiny" model is a small randomly initialized transformer
trained from scratch during fine_tune calls; "hf:<name-or-path>" loads a
pretrained encoder through the transformers library when its assets are
available locally.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .tokenizer import VOCAB_SIZE


class TinySpanModel(nn.Module):
    """Two-layer transformer encoder over hashed word ids, with a linear
    start/end head and the sequence-start hidden state as the text embedding."""

    def __init__(self, hidden: int = 128, layers: int = 2, heads: int = 4,
                 max_len: int = 128):
        super().__init__()
        self.hidden = hidden
        self.max_len = max_len
        self.token_embedding = nn.Embedding(VOCAB_SIZE, hidden)
        self.position_embedding = nn.Embedding(max_len, hidden)
        self.segment_embedding = nn.Embedding(2, hidden)  # 0 question, 1 context
        encoder_layer = nn.TransformerEncoderLayer(
            d_model=hidden,
            nhead=heads,
            dim_feedforward=4 * hidden,
            dropout=0.1,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(encoder_layer, num_layers=layers)
        self.norm = nn.LayerNorm(hidden)
        self.span_head = nn.Linear(hidden, 2)

    def forward(self, ids: torch.Tensor, segments: torch.Tensor,
                pad_mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (hidden_states [B, L, H], span_logits [B, L, 2])."""
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        x = (
            self.token_embedding(ids)
            + self.position_embedding(positions)
            + self.segment_embedding(segments)
        )
        x = self.encoder(self.norm(x), src_key_padding_mask=pad_mask)
        return x, self.span_head(x)
