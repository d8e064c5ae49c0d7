"""Fine-tuning configuration with per-family defaults.

Batch size and warmup differ by encoder family: RoBERTa-style models
train with batch 4 and 1000 warmup steps, BERT-style with batch 8 and
500.  Explicit values always win over family defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

FAMILY_DEFAULTS = {
    "roberta": {"batch_size": 4, "warmup_steps": 1000},
    "bert": {"batch_size": 8, "warmup_steps": 500},
}


class ConfigInvalid(ValueError):
    pass


@dataclass(frozen=True)
class FinetuneConfig:
    base_model: str
    epochs: int = 10
    learning_rate: float = 1e-5
    batch_size: Optional[int] = None   # None: family default
    weight_decay: float = 0.01
    warmup_steps: Optional[int] = None  # None: family default
    max_length: int = 512
    seed: int = 0

    def validate(self) -> None:
        if not self.base_model:
            raise ConfigInvalid("base_model is required")
        if self.epochs < 0:
            raise ConfigInvalid("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigInvalid("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigInvalid("batch_size must be >= 1")
        if self.warmup_steps is not None and self.warmup_steps < 0:
            raise ConfigInvalid("warmup_steps must be >= 0")
        if self.max_length < 8:
            raise ConfigInvalid("max_length must be >= 8")


def resolve(config: FinetuneConfig, model_type: str) -> FinetuneConfig:
    """Fill unset batch size / warmup from the encoder family."""
    family = "roberta" if "roberta" in model_type else "bert"
    defaults = FAMILY_DEFAULTS[family]
    out = config
    if out.batch_size is None:
        out = replace(out, batch_size=defaults["batch_size"])
    if out.warmup_steps is None:
        out = replace(out, warmup_steps=defaults["warmup_steps"])
    out.validate()
    return out
