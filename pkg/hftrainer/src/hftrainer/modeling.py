"""Shared encoder with one token-classification head per task."""
from __future__ import annotations

import torch
from torch import nn
from transformers import AutoConfig, AutoModel

from .labels import ACTOR_TAGS, ARG_TAGS


class MultitaskTagger(nn.Module):
    """One pretrained encoder, two linear heads over its hidden states."""

    def __init__(self, base_model: str, dropout: float = 0.1):
        super().__init__()
        self.encoder = AutoModel.from_pretrained(base_model)
        hidden = self.encoder.config.hidden_size
        self.dropout = nn.Dropout(dropout)
        self.arg_head = nn.Linear(hidden, len(ARG_TAGS))
        self.actor_head = nn.Linear(hidden, len(ACTOR_TAGS))

    @classmethod
    def from_config_dir(cls, config_dir: str) -> "MultitaskTagger":
        # rebuild the architecture without base weights; used when loading
        # a checkpoint whose state dict supplies every parameter
        self = cls.__new__(cls)
        nn.Module.__init__(self)
        config = AutoConfig.from_pretrained(config_dir)
        self.encoder = AutoModel.from_config(config)
        hidden = config.hidden_size
        self.dropout = nn.Dropout(0.1)
        self.arg_head = nn.Linear(hidden, len(ARG_TAGS))
        self.actor_head = nn.Linear(hidden, len(ACTOR_TAGS))
        return self

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor):
        states = self.encoder(input_ids=input_ids,
                              attention_mask=attention_mask).last_hidden_state
        states = self.dropout(states)
        return {"arg": self.arg_head(states), "actor": self.actor_head(states)}


def masked_cross_entropy(logits: torch.Tensor, labels: torch.Tensor,
                         loss_mask: torch.Tensor) -> torch.Tensor:
    """Mean cross entropy over mask-true positions only.

    Label values at masked-out positions are never read, so the sentinel
    there (or anything else) cannot influence the loss.
    """
    flat_mask = loss_mask.reshape(-1)
    if not bool(flat_mask.any()):
        return logits.sum() * 0.0
    flat_logits = logits.reshape(-1, logits.shape[-1])[flat_mask]
    flat_labels = labels.reshape(-1)[flat_mask]
    return nn.functional.cross_entropy(flat_logits, flat_labels)
