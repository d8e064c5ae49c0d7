"""Desk-scale multitask sequence tagger.

One shared encoder (token embeddings + a bidirectional gated recurrent
layer) feeds two independent linear heads, one per labeling dimension.
Training alternates argument-type and actor batches 1:1 over the shared
parameters; after every epoch both dev macro-F1s are computed and the
checkpoint with the best combined score (their unweighted mean) is kept.

Everything is plain numpy in float64 with hand-written gradients, so the
whole training run is bitwise deterministic for a given seed.  Transformer
scale training lives in the separate fine-tuning harness; this module
exists to exercise the full data path on a desk machine.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .biocodec import LabelSequence, encode_bio, tag_names
from .corpus import AnnotatedCase, CorpusError, CorpusSplit, Paragraph
from .evaluation import token_prf

CHECKPOINT_FORMAT = "bigru-tagger/1"

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class EmptyTrainingSet(CorpusError):
    pass


class EmptySplit(CorpusError):
    pass


class ConfigInvalid(ValueError):
    pass


class VocabMissing(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# vocabulary

@dataclass(frozen=True)
class Vocab:
    """Dense token-to-id table with padding at 0 and unknown at 1."""

    tokens: Tuple[str, ...]
    min_freq: int = 1

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.tokens)

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {t: i for i, t in enumerate(self.tokens)})

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        idx = self._index
        return np.array([idx.get(t, 1) for t in texts], dtype=np.int64)


def build_vocab(train_cases: Sequence[AnnotatedCase], min_freq: int = 1) -> Vocab:
    """Frequency-then-lexicographic vocabulary over the training paragraphs."""
    counts: Dict[str, int] = {}
    for case in train_cases:
        for par in case.paragraphs:
            for tok in par.tokens:
                counts[tok.text] = counts.get(tok.text, 0) + 1
    if not counts:
        raise EmptyTrainingSet("no tokens in training set")
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocab((PAD_TOKEN, UNK_TOKEN) + tuple(kept), min_freq)


# ---------------------------------------------------------------------------
# configuration and checkpoint

@dataclass(frozen=True)
class TaggerConfig:
    embedding_dim: int = 64
    hidden_dim: int = 128
    epochs: int = 10
    # 1e-5 is the published fine-tuning rate for pretrained transformers;
    # a randomly initialized recurrent encoder needs a larger step.
    learning_rate: float = 1e-3
    batch_size: int = 8
    weight_decay: float = 0.01
    warmup_steps: int = 100
    seed: int = 0

    def validate(self) -> None:
        if self.embedding_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigInvalid("dimensions must be positive")
        if self.epochs < 0:
            raise ConfigInvalid("epochs must be non-negative")
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise ConfigInvalid("learning_rate and batch_size must be positive")
        if self.weight_decay < 0 or self.warmup_steps < 0:
            raise ConfigInvalid("weight_decay and warmup_steps must be non-negative")


@dataclass
class TrainRow:
    """One evaluated epoch.  Epoch 0 is the initialized model (no losses)."""

    epoch: int
    arg_loss: Optional[float]
    actor_loss: Optional[float]
    dev_arg_f1: float
    dev_actor_f1: float
    combined: float


@dataclass
class Checkpoint:
    config: TaggerConfig
    vocab: Vocab
    params: Dict[str, np.ndarray]
    epoch: int
    dev_metrics: Dict[str, float]
    history: Tuple[TrainRow, ...] = ()


HEADS = ("arg", "actor")
_GATES = ("z", "r", "n")


def init_params(config: TaggerConfig, vocab_size: int,
                rng: Optional[np.random.Generator] = None) -> Dict[str, np.ndarray]:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    E, H = config.embedding_dim, config.hidden_dim
    params: Dict[str, np.ndarray] = {}
    params["emb"] = rng.uniform(-0.1, 0.1, size=(vocab_size, E))
    for d in ("fw", "bw"):
        for g in _GATES:
            params[f"{d}_W{g}"] = rng.uniform(-1, 1, size=(E, H)) / np.sqrt(E)
            params[f"{d}_U{g}"] = rng.uniform(-1, 1, size=(H, H)) / np.sqrt(H)
            params[f"{d}_b{g}"] = np.zeros(H)
    for head in HEADS:
        C = len(tag_names(head))
        params[f"{head}_W"] = rng.uniform(-1, 1, size=(2 * H, C)) / np.sqrt(2 * H)
        params[f"{head}_b"] = np.zeros(C)
    return params


# ---------------------------------------------------------------------------
# forward / backward

def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _gru_forward(params, prefix, x, mask, reverse):
    # mask-carry recurrence: padded steps pass the state through untouched,
    # so outputs at real positions never depend on how much padding follows
    B, T, _ = x.shape
    H = params[f"{prefix}_Uz"].shape[0]
    Wz, Uz, bz = params[f"{prefix}_Wz"], params[f"{prefix}_Uz"], params[f"{prefix}_bz"]
    Wr, Ur, br = params[f"{prefix}_Wr"], params[f"{prefix}_Ur"], params[f"{prefix}_br"]
    Wn, Un, bn = params[f"{prefix}_Wn"], params[f"{prefix}_Un"], params[f"{prefix}_bn"]
    h = np.zeros((B, H))
    hs = np.zeros((B, T, H))
    cache = []
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        xt = x[:, t]
        m = mask[:, t][:, None]
        z = _sigmoid(xt @ Wz + h @ Uz + bz)
        r = _sigmoid(xt @ Wr + h @ Ur + br)
        rh = r * h
        n = np.tanh(xt @ Wn + rh @ Un + bn)
        hnew = (1.0 - z) * n + z * h
        hout = m * hnew + (1.0 - m) * h
        cache.append((t, h, z, r, n, rh, m))
        hs[:, t] = hout
        h = hout
    return hs, cache


def _gru_backward(params, prefix, x, cache, dhs):
    Wz, Uz = params[f"{prefix}_Wz"], params[f"{prefix}_Uz"]
    Wr, Ur = params[f"{prefix}_Wr"], params[f"{prefix}_Ur"]
    Wn, Un = params[f"{prefix}_Wn"], params[f"{prefix}_Un"]
    grads = {f"{prefix}_{n}": np.zeros_like(params[f"{prefix}_{n}"])
             for n in ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wn", "Un", "bn")}
    dx = np.zeros_like(x)
    dh = np.zeros_like(cache[0][1])
    for t, hprev, z, r, n, rh, m in reversed(cache):
        dhout = dhs[:, t] + dh
        dhnew = dhout * m
        dhprev = dhout * (1.0 - m) + dhnew * z
        dn = dhnew * (1.0 - z)
        dz = dhnew * (hprev - n)
        dan = dn * (1.0 - n * n)
        xt = x[:, t]
        grads[f"{prefix}_Wn"] += xt.T @ dan
        grads[f"{prefix}_Un"] += rh.T @ dan
        grads[f"{prefix}_bn"] += dan.sum(axis=0)
        dx[:, t] += dan @ Wn.T
        drh = dan @ Un.T
        dr = drh * hprev
        dhprev += drh * r
        daz = dz * z * (1.0 - z)
        grads[f"{prefix}_Wz"] += xt.T @ daz
        grads[f"{prefix}_Uz"] += hprev.T @ daz
        grads[f"{prefix}_bz"] += daz.sum(axis=0)
        dx[:, t] += daz @ Wz.T
        dhprev += daz @ Uz.T
        dar = dr * r * (1.0 - r)
        grads[f"{prefix}_Wr"] += xt.T @ dar
        grads[f"{prefix}_Ur"] += hprev.T @ dar
        grads[f"{prefix}_br"] += dar.sum(axis=0)
        dx[:, t] += dar @ Wr.T
        dhprev += dar @ Ur.T
        dh = dhprev
    return grads, dx


def encode_features(params, ids: np.ndarray, mask: np.ndarray):
    """Shared encoder output (B, T, 2H) plus the caches for backprop."""
    x = params["emb"][ids]
    h_fw, cache_fw = _gru_forward(params, "fw", x, mask, reverse=False)
    h_bw, cache_bw = _gru_forward(params, "bw", x, mask, reverse=True)
    feats = np.concatenate([h_fw, h_bw], axis=2)
    return feats, (x, cache_fw, cache_bw)


def head_logits(params, feats: np.ndarray, head: str) -> np.ndarray:
    return feats @ params[f"{head}_W"] + params[f"{head}_b"]


def loss_and_grads(params, ids, mask, targets, loss_mask, head):
    """Masked token cross-entropy and gradients for every parameter.

    `loss_mask` is the explicit per-position switch; target values at
    switched-off positions are never read, so a sentinel there cannot
    leak into the loss or the gradients.
    """
    feats, (x, cache_fw, cache_bw) = encode_features(params, ids, mask)
    logits = head_logits(params, feats, head)
    B, T, C = logits.shape
    shifted = logits - logits.max(axis=2, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=2, keepdims=True))
    logp = shifted - logz
    lm = loss_mask.astype(bool)
    n_active = int(lm.sum())
    safe = np.where(lm, targets, 0)
    picked = np.take_along_axis(logp, safe[:, :, None], axis=2)[:, :, 0]
    denom = max(n_active, 1)
    loss = -float((picked * lm).sum()) / denom

    probs = np.exp(logp)
    dlogits = probs.copy()
    np.put_along_axis(dlogits, safe[:, :, None],
                      np.take_along_axis(dlogits, safe[:, :, None], axis=2) - 1.0,
                      axis=2)
    dlogits *= lm[:, :, None] / denom

    grads = {f"{head}_W": feats.reshape(-1, feats.shape[2]).T @ dlogits.reshape(-1, C),
             f"{head}_b": dlogits.sum(axis=(0, 1))}
    dfeats = dlogits @ params[f"{head}_W"].T
    H = params["fw_Uz"].shape[0]
    g_fw, dx_fw = _gru_backward(params, "fw", x, cache_fw, dfeats[:, :, :H])
    g_bw, dx_bw = _gru_backward(params, "bw", x, cache_bw, dfeats[:, :, H:])
    grads.update(g_fw)
    grads.update(g_bw)
    demb = np.zeros_like(params["emb"])
    np.add.at(demb, ids, dx_fw + dx_bw)
    grads["emb"] = demb
    other = HEADS[1] if head == HEADS[0] else HEADS[0]
    grads[f"{other}_W"] = np.zeros_like(params[f"{other}_W"])
    grads[f"{other}_b"] = np.zeros_like(params[f"{other}_b"])
    return loss, grads


# ---------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    ids: np.ndarray
    mask: np.ndarray
    targets: Dict[str, np.ndarray]
    loss_mask: np.ndarray
    order: Tuple[int, ...]


def _label_ids(labels: Sequence[str], head: str) -> np.ndarray:
    index = {t: i for i, t in enumerate(tag_names(head))}
    return np.array([index[l] for l in labels], dtype=np.int64)


def _case_training_items(case: AnnotatedCase):
    items = []
    for par in case.paragraphs:
        if not par.tokens:
            continue
        spans = [s for s in case.gold_spans if s.paragraph_id == par.id]
        arg = encode_bio(par, spans, "arg").labels
        actor = encode_bio(par, spans, "actor").labels
        items.append((tuple(t.text for t in par.tokens),
                      _label_ids(arg, "arg"), _label_ids(actor, "actor")))
    return items


def _pad_batch(vocab: Vocab, chunk, indices) -> Batch:
    T = max(len(texts) for texts, _, _ in chunk)
    B = len(chunk)
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T))
    targets = {h: np.zeros((B, T), dtype=np.int64) for h in HEADS}
    for i, (texts, arg_t, actor_t) in enumerate(chunk):
        n = len(texts)
        ids[i, :n] = vocab.encode(texts)
        mask[i, :n] = 1.0
        targets["arg"][i, :n] = arg_t
        targets["actor"][i, :n] = actor_t
    return Batch(ids, mask, targets, mask.astype(bool), tuple(indices))


def make_batches(items, vocab: Vocab, batch_size: int) -> List[Batch]:
    # length buckets keep padding low; order inside a bucket is stable
    order = sorted(range(len(items)), key=lambda i: (len(items[i][0]), i))
    batches = []
    for start in range(0, len(order), batch_size):
        sel = order[start:start + batch_size]
        batches.append(_pad_batch(vocab, [items[i] for i in sel], sel))
    return batches


# ---------------------------------------------------------------------------
# optimizer

class _AdamW:
    """Adam with decoupled weight decay and linear warmup.

    Decay touches the weight matrices only; biases and the embedding
    table are exempt.
    """

    def __init__(self, params, config: TaggerConfig):
        self.config = config
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads):
        c = self.config
        self.step_count += 1
        t = self.step_count
        scale = min(1.0, t / c.warmup_steps) if c.warmup_steps > 0 else 1.0
        lr = c.learning_rate * scale
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k, p in params.items():
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** t)
            vhat = self.v[k] / (1 - b2 ** t)
            update = mhat / (np.sqrt(vhat) + eps)
            if p.ndim == 2 and k != "emb":
                update = update + c.weight_decay * p
            params[k] = p - lr * update


# ---------------------------------------------------------------------------
# training

def _resolve_cases(corpus, ids) -> List[AnnotatedCase]:
    by_id = {c.case_id: c for c in corpus} if not isinstance(corpus, dict) else corpus
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise EmptySplit(f"split references unknown case ids: {missing[:3]}")
    return [by_id[i] for i in ids]


def _dev_f1(params, vocab, dev_items) -> Dict[str, float]:
    out = {}
    for head in HEADS:
        gold, pred = [], []
        for texts, arg_t, actor_t in dev_items:
            names = tag_names(head)
            target = arg_t if head == "arg" else actor_t
            gold.append([names[i] for i in target])
        pred = _predict_items(params, vocab, [it[0] for it in dev_items], head)
        table = token_prf(gold, pred, dimension=head)
        out[head] = table.macro_f1
    return out


def _predict_items(params, vocab: Vocab, token_lists, head: str) -> List[List[str]]:
    names = tag_names(head)
    results: List[Optional[List[str]]] = [None] * len(token_lists)
    order = sorted(range(len(token_lists)), key=lambda i: (len(token_lists[i]), i))
    batch_size = 32
    for start in range(0, len(order), batch_size):
        sel = [i for i in order[start:start + batch_size] if token_lists[i]]
        if not sel:
            continue
        T = max(len(token_lists[i]) for i in sel)
        ids = np.zeros((len(sel), T), dtype=np.int64)
        mask = np.zeros((len(sel), T))
        for row, i in enumerate(sel):
            n = len(token_lists[i])
            ids[row, :n] = vocab.encode(token_lists[i])
            mask[row, :n] = 1.0
        feats, _ = encode_features(params, ids, mask)
        best = head_logits(params, feats, head).argmax(axis=2)
        for row, i in enumerate(sel):
            results[i] = [names[j] for j in best[row, :len(token_lists[i])]]
    for i, r in enumerate(results):
        if r is None:
            results[i] = []
    return results


def train(split: CorpusSplit, corpus, config: TaggerConfig = TaggerConfig()) -> Checkpoint:
    """Train on the split's train cases, select by combined dev macro-F1."""
    config.validate()
    train_cases = _resolve_cases(corpus, split.train)
    dev_cases = _resolve_cases(corpus, split.dev)
    if not train_cases:
        raise EmptySplit("training split is empty")
    vocab = build_vocab(train_cases)
    train_items = [it for c in train_cases for it in _case_training_items(c)]
    dev_items = [it for c in dev_cases for it in _case_training_items(c)]
    if not train_items:
        raise EmptyTrainingSet("no training paragraphs")

    params = init_params(config, len(vocab))
    opt = _AdamW(params, config)
    batches = make_batches(train_items, vocab, config.batch_size)

    def snapshot(metrics):
        return {k: v.copy() for k, v in params.items()}, dict(metrics)

    def evaluate():
        f1 = _dev_f1(params, vocab, dev_items) if dev_items else {h: 0.0 for h in HEADS}
        combined = (f1["arg"] + f1["actor"]) / 2.0
        return {"dev_arg_f1": f1["arg"], "dev_actor_f1": f1["actor"],
                "combined": combined}

    history: List[TrainRow] = []
    metrics = evaluate()
    history.append(TrainRow(0, None, None, metrics["dev_arg_f1"],
                            metrics["dev_actor_f1"], metrics["combined"]))
    best_params, best_metrics = snapshot(metrics)
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        rng = random.Random(f"{config.seed}:{epoch}")
        order = list(range(len(batches)))
        rng.shuffle(order)
        sums = {h: 0.0 for h in HEADS}
        counts = {h: 0 for h in HEADS}
        for bi in order:
            b = batches[bi]
            # 1:1 alternation: every batch drives one update per head
            for head in HEADS:
                loss, grads = loss_and_grads(params, b.ids, b.mask,
                                             b.targets[head], b.loss_mask, head)
                opt.step(params, grads)
                sums[head] += loss
                counts[head] += 1
        metrics = evaluate()
        history.append(TrainRow(
            epoch,
            sums["arg"] / max(counts["arg"], 1),
            sums["actor"] / max(counts["actor"], 1),
            metrics["dev_arg_f1"], metrics["dev_actor_f1"], metrics["combined"]))
        if metrics["combined"] > best_metrics["combined"]:
            best_params, best_metrics = snapshot(metrics)
            best_epoch = epoch

    return Checkpoint(config, vocab, best_params, best_epoch, best_metrics,
                      tuple(history))


# ---------------------------------------------------------------------------
# prediction

def predict(ckpt: Checkpoint, case: AnnotatedCase) -> List[Tuple[LabelSequence, LabelSequence]]:
    """One (arg, actor) label sequence pair per paragraph, in case order."""
    if ckpt.vocab is None or len(ckpt.vocab) == 0:
        raise VocabMissing("checkpoint has no vocabulary")
    token_lists = [tuple(t.text for t in p.tokens) for p in case.paragraphs]
    per_head = {h: _predict_items(ckpt.params, ckpt.vocab, token_lists, h)
                for h in HEADS}
    out = []
    for i, par in enumerate(case.paragraphs):
        out.append((LabelSequence("arg", par.id, tuple(per_head["arg"][i])),
                    LabelSequence("actor", par.id, tuple(per_head["actor"][i]))))
    return out


def predictions_by_paragraph(ckpt: Checkpoint, case: AnnotatedCase):
    """Mapping accepted by `case_records`: id -> (arg labels, actor labels)."""
    return {arg.paragraph_id: (arg.labels, actor.labels)
            for arg, actor in predict(ckpt, case)}


# ---------------------------------------------------------------------------
# checkpoint serialization

def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(ckpt.config),
        "vocab": {"tokens": list(ckpt.vocab.tokens), "min_freq": ckpt.vocab.min_freq},
        "epoch": ckpt.epoch,
        "dev_metrics": ckpt.dev_metrics,
        "history": [asdict(r) for r in ckpt.history],
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in ckpt.params.items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format: {doc.get('format')!r}")
    params = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
              for k, v in doc["params"].items()}
    return Checkpoint(
        TaggerConfig(**doc["config"]),
        Vocab(tuple(doc["vocab"]["tokens"]), doc["vocab"]["min_freq"]),
        params,
        doc["epoch"],
        doc["dev_metrics"],
        tuple(TrainRow(**r) for r in doc["history"]),
    )
