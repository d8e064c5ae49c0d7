"""End-to-end smoke, sentinel masking and determinism checks.

The final two tests print acceptance checklist lines matching the
primary package's release gate (criteria 13 and 14 live here).
"""
import json
import subprocess
import sys
import time
from dataclasses import replace

import pytest
import torch

from hftrainer.config import ConfigInvalid, FinetuneConfig, resolve
from hftrainer.data import (DataError, read_case, read_corpus, read_split,
                            write_predictions)
from hftrainer.finetune import (batch_loss, encode_batch, finetune,
                                load_checkpoint, predict_corpus,
                                save_checkpoint)
from hftrainer.labels import ACTOR_TAGS, ARG_TAGS, SENTINEL
from hftrainer.modeling import MultitaskTagger
from hftrainer.tiny import build_tiny_base

TINY_CONFIG = dict(epochs=1, learning_rate=1e-3, batch_size=4,
                   warmup_steps=2, max_length=64, seed=0)


# ---------------------------------------------------------------------------
# configuration

def test_family_defaults():
    cfg = resolve(FinetuneConfig("some/model"), "roberta")
    assert (cfg.batch_size, cfg.warmup_steps) == (4, 1000)
    cfg = resolve(FinetuneConfig("some/model"), "bert")
    assert (cfg.batch_size, cfg.warmup_steps) == (8, 500)
    cfg = resolve(FinetuneConfig("some/model", batch_size=2, warmup_steps=7),
                  "roberta")
    assert (cfg.batch_size, cfg.warmup_steps) == (2, 7)


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        FinetuneConfig("").validate()
    with pytest.raises(ConfigInvalid):
        FinetuneConfig("m", epochs=-1).validate()
    with pytest.raises(ConfigInvalid):
        resolve(FinetuneConfig("m", learning_rate=0.0), "bert")
    FinetuneConfig("m").validate()


# ---------------------------------------------------------------------------
# data plumbing

def test_read_case_builds_bio_from_byte_offsets(tmp_path):
    text = "café refusé par la cour"
    raw = text.encode("utf-8")
    words = ["café", "refusé", "par", "la", "cour"]
    tokens, pos = [], 0
    for w in words:
        n = len(w.encode("utf-8"))
        tokens.append({"start": pos, "end": pos + n})
        pos += n + 1
    assert raw[tokens[1]["start"]:tokens[1]["end"]].decode("utf-8") == "refusé"
    doc = {"case_id": "c", "article": 8, "importance": 1,
           "paragraphs": [{"id": "1", "text": text, "tokens": tokens,
                           "in_law_section": True}],
           "gold_spans": [{"paragraph_id": "1", "tok_start": 1, "tok_end": 3,
                           "arg_type": "DecisionECHR", "actor": "State"}],
           "annotator_layers": []}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    case = read_case(path)
    par = case.paragraphs[0]
    assert par.words == ("café", "refusé", "par", "la", "cour")
    assert par.arg_tags == ("O", "B-Decision ECHR", "I-Decision ECHR", "O", "O")
    assert par.actor_tags == ("O", "B-State", "I-State", "O", "O")


def test_read_case_rejects_unknown_category(tmp_path):
    doc = {"case_id": "c", "paragraphs": [{"id": "1", "text": "a b",
                                           "tokens": [{"start": 0, "end": 1},
                                                      {"start": 2, "end": 3}],
                                           "in_law_section": True}],
           "gold_spans": [{"paragraph_id": "1", "tok_start": 0, "tok_end": 1,
                           "arg_type": "NoSuchType", "actor": None}]}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(DataError):
        read_case(path)


def test_read_corpus_and_split(corpus_dir, split_path):
    corpus = read_corpus(corpus_dir)
    assert sorted(corpus) == [f"case{i}" for i in range(5)]
    assert all(len(c.paragraphs) == 3 for c in corpus.values())
    train, dev, test = read_split(split_path)
    assert len(train) == 5 and dev == ("case0",) and test == ("case1",)


def test_tag_tables():
    assert len(ARG_TAGS) == 31 and len(ACTOR_TAGS) == 11
    assert ARG_TAGS[0] == "O" and ACTOR_TAGS[0] == "O"
    assert "B-Necessity/Proportionality" in ARG_TAGS
    assert "I-Commission/Chamber" in ACTOR_TAGS


# ---------------------------------------------------------------------------
# shared fixtures for model-level tests

@pytest.fixture(scope="session")
def tiny_base(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("base")
    return build_tiny_base(corpus_dir, out, seed=0)


@pytest.fixture(scope="session")
def finetuned(corpus_dir, split_path, tiny_base, tmp_path_factory):
    corpus = read_corpus(corpus_dir)
    split = read_split(split_path)
    config = FinetuneConfig(str(tiny_base), **TINY_CONFIG)
    start = time.monotonic()
    model, tokenizer, config, history, best_epoch = finetune(corpus, split, config)
    elapsed = time.monotonic() - start
    ckpt = tmp_path_factory.mktemp("ckpt")
    save_checkpoint(ckpt, model, tokenizer, config, history, best_epoch)
    return model, tokenizer, config, history, best_epoch, ckpt, elapsed


# ---------------------------------------------------------------------------
# alignment and encoding

def test_encode_batch_alignment(corpus_dir, tiny_base):
    from transformers import AutoTokenizer
    tokenizer = AutoTokenizer.from_pretrained(tiny_base)
    corpus = read_corpus(corpus_dir)
    examples = corpus["case0"].paragraphs
    batch = encode_batch(tokenizer, list(examples), max_length=64)
    assert int(batch.loss_mask.sum()) == sum(len(ex.words) for ex in examples)
    for b, ex in enumerate(examples):
        assert len(batch.word_index[b]) == len(ex.words)
        for w, t in enumerate(batch.word_index[b]):
            assert bool(batch.loss_mask[b, t])
            assert batch.labels["arg"][b, t] == ARG_TAGS.index(ex.arg_tags[w])
    assert (batch.labels["arg"][~batch.loss_mask] == SENTINEL).all()
    assert (batch.labels["actor"][~batch.loss_mask] == SENTINEL).all()


def test_vocab_produces_multipiece_words(corpus_dir, tiny_base):
    from transformers import AutoTokenizer
    tokenizer = AutoTokenizer.from_pretrained(tiny_base)
    pieces = tokenizer.tokenize("necessity")
    assert len(pieces) > 1 and pieces[1].startswith("##")


# ---------------------------------------------------------------------------
# training behaviour

def test_metric_log_shape_and_best_rule(finetuned):
    _, _, _, history, best_epoch, _, _ = finetuned
    assert [r.epoch for r in history] == [0, 1]
    assert history[0].train_loss is None
    assert history[1].train_loss is not None
    best = max(r.combined for r in history)
    assert history[best_epoch].combined == best
    assert all(r.combined < best for r in history[:best_epoch])


def test_metric_log_deterministic(corpus_dir, split_path, tiny_base):
    corpus = read_corpus(corpus_dir)
    split = read_split(split_path)
    config = FinetuneConfig(str(tiny_base), **TINY_CONFIG)
    _, _, _, h1, _ = finetune(corpus, split, config)
    _, _, _, h2, _ = finetune(corpus, split, config)
    assert h1 == h2


def test_checkpoint_roundtrip_predictions(finetuned, corpus_dir):
    model, tokenizer, config, _, _, ckpt, _ = finetuned
    corpus = read_corpus(corpus_dir)
    direct = predict_corpus(model, tokenizer, corpus, config, ["case2"])
    model2, tokenizer2, config2, history2, _ = load_checkpoint(ckpt)
    loaded = predict_corpus(model2, tokenizer2, corpus, config2, ["case2"])
    assert [r.pred_arg for r in direct] == [r.pred_arg for r in loaded]
    assert [r.pred_actor for r in direct] == [r.pred_actor for r in loaded]
    assert len(history2) == 2


def test_truncated_words_fall_back_to_outside(finetuned, corpus_dir):
    model, tokenizer, config, _, _, _, _ = finetuned
    corpus = read_corpus(corpus_dir)
    ex = corpus["case0"].paragraphs[0]
    tight = replace(config, max_length=8)
    rows = predict_corpus(model, tokenizer, {"case0": corpus["case0"]}, tight,
                          ["case0"])
    assert all(len(r.pred_arg) == len(r.example.words) for r in rows)
    assert rows[0].pred_arg[-1] == "O"
    assert len(ex.words) > 8 - 2  # truncation actually bites


# ---------------------------------------------------------------------------
# acceptance criteria 13 and 14

def test_c13_smoke_predictions_accepted_by_primary_eval(finetuned, corpus_dir,
                                                        tmp_path):
    model, tokenizer, config, _, _, _, elapsed = finetuned
    corpus = read_corpus(corpus_dir)
    rows = predict_corpus(model, tokenizer, corpus, config)
    pred = tmp_path / "pred.tsv"
    write_predictions(pred, rows)
    r = subprocess.run([sys.executable, "-m", "argmine.cli", "eval",
                        "--pred", str(pred), "--out", str(tmp_path / "m.tsv")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "Error" not in r.stderr
    assert (tmp_path / "m.tsv").exists()
    assert elapsed < 600.0, f"fine-tuning took {elapsed:.0f}s"
    print(f"\n[criterion 13] PASS  tiny model, 5 cases, 1 epoch -> TSV "
          f"accepted by eval (train {elapsed:.1f}s)")


def test_c14_sentinel_positions_cannot_move_the_loss(corpus_dir, tiny_base):
    from transformers import AutoTokenizer
    tokenizer = AutoTokenizer.from_pretrained(tiny_base)
    corpus = read_corpus(corpus_dir)
    examples = list(corpus["case3"].paragraphs)
    batch = encode_batch(tokenizer, examples, max_length=64)
    torch.manual_seed(0)
    model = MultitaskTagger(str(tiny_base))
    model.eval()  # dropout off so the two forward passes are comparable

    with torch.no_grad():
        base = batch_loss(model, batch)
    masked_out = ~batch.loss_mask
    assert int(masked_out.sum()) > 0
    gen = torch.Generator().manual_seed(1)
    for head in ("arg", "actor"):
        n = len(ARG_TAGS) if head == "arg" else len(ACTOR_TAGS)
        noise = torch.randint(0, n, batch.labels[head].shape, generator=gen)
        batch.labels[head][masked_out] = noise[masked_out]
    with torch.no_grad():
        perturbed = batch_loss(model, batch)
    for head in ("arg", "actor"):
        assert abs(float(base[head]) - float(perturbed[head])) <= 1e-7
    print("\n[criterion 14] PASS  perturbing sentinel-masked labels leaves "
          "both losses unchanged")
