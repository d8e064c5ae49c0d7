"""Fine-tuning loop, dev-set selection and prediction.

Mirrors the conventions of the annotation toolkit's own tagger: the
checkpoint kept is the one with the best unweighted mean of the two dev
macro-F1 scores (ties keep the earlier epoch), the metric log carries an
epoch-0 row from the untrained model, and all randomness flows from the
configured seed.  Labels live at word-initial subword pieces; every
other position carries the sentinel and an explicit loss mask keeps it
out of the objective.
"""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from transformers import AutoTokenizer, get_linear_schedule_with_warmup

from .config import FinetuneConfig, resolve
from .data import Case, ParagraphExample, PredictionRow
from .labels import (ACTOR_TAG_IDS, ACTOR_TAGS, ARG_TAG_IDS, ARG_TAGS, HEADS,
                     SENTINEL)
from .modeling import MultitaskTagger, masked_cross_entropy

CHECKPOINT_FORMAT = "hf-multitask/1"


@dataclass(frozen=True)
class Encoded:
    examples: Tuple[ParagraphExample, ...]
    input_ids: torch.Tensor       # (B, T)
    attention_mask: torch.Tensor  # (B, T)
    labels: Dict[str, torch.Tensor]     # sentinel everywhere the mask is off
    loss_mask: torch.Tensor       # (B, T) bool, word-initial pieces only
    word_index: Tuple[Tuple[int, ...], ...]  # per row: piece index of each word


def encode_batch(tokenizer, examples: Sequence[ParagraphExample],
                 max_length: int) -> Encoded:
    enc = tokenizer([list(ex.words) for ex in examples],
                    is_split_into_words=True, padding=True, truncation=True,
                    max_length=max_length, return_tensors="pt")
    B, T = enc["input_ids"].shape
    labels = {h: torch.full((B, T), SENTINEL, dtype=torch.long) for h in HEADS}
    loss_mask = torch.zeros((B, T), dtype=torch.bool)
    word_index: List[Tuple[int, ...]] = []
    for b, ex in enumerate(examples):
        seen, firsts = set(), {}
        for t, w in enumerate(enc.word_ids(b)):
            if w is None or w in seen:
                continue
            seen.add(w)
            firsts[w] = t
            loss_mask[b, t] = True
            labels["arg"][b, t] = ARG_TAG_IDS[ex.arg_tags[w]]
            labels["actor"][b, t] = ACTOR_TAG_IDS[ex.actor_tags[w]]
        word_index.append(tuple(firsts[w] for w in sorted(firsts)))
    return Encoded(tuple(examples), enc["input_ids"], enc["attention_mask"],
                   labels, loss_mask, tuple(word_index))


def batch_loss(model: MultitaskTagger, batch: Encoded) -> Dict[str, torch.Tensor]:
    logits = model(batch.input_ids, batch.attention_mask)
    return {h: masked_cross_entropy(logits[h], batch.labels[h], batch.loss_mask)
            for h in HEADS}


def _macro_f1_percent(gold: List[str], pred: List[str]) -> float:
    universe = sorted(set(gold) | set(pred))
    scores = []
    for lab in universe:
        tp = sum(g == lab and p == lab for g, p in zip(gold, pred))
        fp = sum(g != lab and p == lab for g, p in zip(gold, pred))
        fn = sum(g == lab and p != lab for g, p in zip(gold, pred))
        prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(scores) / max(len(scores), 1)


def _predict_batch(model: MultitaskTagger, batch: Encoded) -> List[Tuple[Tuple[str, ...], Tuple[str, ...]]]:
    model.eval()
    with torch.no_grad():
        logits = model(batch.input_ids, batch.attention_mask)
    out = []
    for b, ex in enumerate(batch.examples):
        idx = list(batch.word_index[b])
        # words lost to truncation fall back to O
        arg = ["O"] * len(ex.words)
        actor = ["O"] * len(ex.words)
        for w, t in enumerate(idx):
            arg[w] = ARG_TAGS[int(logits["arg"][b, t].argmax())]
            actor[w] = ACTOR_TAGS[int(logits["actor"][b, t].argmax())]
        out.append((tuple(arg), tuple(actor)))
    return out


def _dev_scores(model, tokenizer, examples, config) -> Dict[str, float]:
    if not examples:
        return {"arg": 0.0, "actor": 0.0}
    gold = {h: [] for h in HEADS}
    pred = {h: [] for h in HEADS}
    for start in range(0, len(examples), config.batch_size):
        batch = encode_batch(tokenizer, examples[start:start + config.batch_size],
                             config.max_length)
        for ex, (arg, actor) in zip(batch.examples, _predict_batch(model, batch)):
            gold["arg"].extend(ex.arg_tags)
            gold["actor"].extend(ex.actor_tags)
            pred["arg"].extend(arg)
            pred["actor"].extend(actor)
    return {h: _macro_f1_percent(gold[h], pred[h]) for h in HEADS}


@dataclass(frozen=True)
class MetricRow:
    epoch: int
    train_loss: Optional[float]
    dev_arg_f1: float
    dev_actor_f1: float
    combined: float


def _paragraphs(corpus: Dict[str, Case], ids: Sequence[str]) -> List[ParagraphExample]:
    out = []
    for cid in ids:
        if cid not in corpus:
            raise KeyError(f"split references unknown case {cid!r}")
        out.extend(corpus[cid].paragraphs)
    return out


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def finetune(corpus: Dict[str, Case], split, config: FinetuneConfig):
    """Train on the split's train cases, select by combined dev macro-F1.

    Returns (model, tokenizer, resolved config, metric rows, best epoch).
    """
    tokenizer = AutoTokenizer.from_pretrained(config.base_model)
    model = MultitaskTagger(config.base_model)
    config = resolve(config, model.encoder.config.model_type)
    seed_everything(config.seed)

    train_ids, dev_ids, _ = split
    train_examples = _paragraphs(corpus, train_ids)
    dev_examples = _paragraphs(corpus, dev_ids)
    if not train_examples:
        raise ValueError("no training paragraphs in the split")

    decay, no_decay = [], []
    for name, p in model.named_parameters():
        (no_decay if name.endswith("bias") or "LayerNorm" in name else decay).append(p)
    optimizer = torch.optim.AdamW(
        [{"params": decay, "weight_decay": config.weight_decay},
         {"params": no_decay, "weight_decay": 0.0}], lr=config.learning_rate)
    steps_per_epoch = (len(train_examples) + config.batch_size - 1) // config.batch_size
    scheduler = get_linear_schedule_with_warmup(
        optimizer, config.warmup_steps,
        max(config.epochs * steps_per_epoch, 1))

    def evaluate() -> Dict[str, float]:
        f1 = _dev_scores(model, tokenizer, dev_examples, config)
        return {"dev_arg_f1": f1["arg"], "dev_actor_f1": f1["actor"],
                "combined": (f1["arg"] + f1["actor"]) / 2.0}

    history: List[MetricRow] = []
    metrics = evaluate()
    history.append(MetricRow(0, None, metrics["dev_arg_f1"],
                             metrics["dev_actor_f1"], metrics["combined"]))
    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
    best_metrics, best_epoch = metrics, 0

    order = list(range(len(train_examples)))
    for epoch in range(1, config.epochs + 1):
        random.Random(f"{config.seed}:{epoch}").shuffle(order)
        model.train()
        total, n_batches = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_examples[i] for i in order[start:start + config.batch_size]]
            batch = encode_batch(tokenizer, chunk, config.max_length)
            losses = batch_loss(model, batch)
            loss = losses["arg"] + losses["actor"]
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            total += float(loss.detach())
            n_batches += 1
        metrics = evaluate()
        history.append(MetricRow(epoch, total / max(n_batches, 1),
                                 metrics["dev_arg_f1"], metrics["dev_actor_f1"],
                                 metrics["combined"]))
        if metrics["combined"] > best_metrics["combined"]:
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            best_metrics, best_epoch = metrics, epoch

    model.load_state_dict(best_state)
    return model, tokenizer, config, history, best_epoch


def save_checkpoint(directory, model: MultitaskTagger, tokenizer,
                    config: FinetuneConfig, history: Sequence[MetricRow],
                    best_epoch: int) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), directory / "model.pt")
    model.encoder.config.save_pretrained(directory)
    tokenizer.save_pretrained(directory)
    meta = {"format": CHECKPOINT_FORMAT, "config": asdict(config),
            "best_epoch": best_epoch, "history": [asdict(r) for r in history]}
    (directory / "meta.json").write_text(json.dumps(meta, indent=1),
                                         encoding="utf-8")


def load_checkpoint(directory):
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {meta.get('format')!r}")
    model = MultitaskTagger.from_config_dir(str(directory))
    model.load_state_dict(torch.load(directory / "model.pt", weights_only=True))
    tokenizer = AutoTokenizer.from_pretrained(directory)
    config = FinetuneConfig(**meta["config"])
    history = tuple(MetricRow(**r) for r in meta["history"])
    return model, tokenizer, config, history, meta["best_epoch"]


def predict_corpus(model: MultitaskTagger, tokenizer, corpus: Dict[str, Case],
                   config: FinetuneConfig,
                   case_ids: Optional[Sequence[str]] = None) -> List[PredictionRow]:
    ids = list(case_ids) if case_ids is not None else sorted(corpus)
    examples = _paragraphs(corpus, ids)
    rows: List[PredictionRow] = []
    batch_size = config.batch_size or 8
    for start in range(0, len(examples), batch_size):
        batch = encode_batch(tokenizer, examples[start:start + batch_size],
                             config.max_length)
        for ex, (arg, actor) in zip(batch.examples, _predict_batch(model, batch)):
            rows.append(PredictionRow(ex, arg, actor))
    return rows
