"""Build a tiny local encoder for offline smoke runs.

The WordPiece vocabulary is derived from the corpus itself: short words
stay whole, longer words are split into a prefix piece and a
continuation piece so subword alignment paths always see multi-piece
tokens.  The encoder is a randomly initialized small BERT saved with its
tokenizer to one directory, loadable like any pretrained model id.
"""
from __future__ import annotations

from pathlib import Path

import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

from .data import read_corpus

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
SPLIT_LEN = 7  # words at least this long become prefix + continuation


def _vocab_from_words(words) -> dict:
    pieces = []
    for w in sorted({w.lower() for w in words}):
        if len(w) >= SPLIT_LEN:
            head = w[:4]
            pieces.append(head)
            pieces.append("##" + w[4:])
        else:
            pieces.append(w)
    vocab = {}
    for tok in SPECIALS + sorted(set(pieces)):
        if tok not in vocab:
            vocab[tok] = len(vocab)
    return vocab


def build_tiny_base(corpus_dir, out_dir, hidden_size: int = 32,
                    num_layers: int = 1, num_heads: int = 2,
                    max_length: int = 192, seed: int = 0) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = read_corpus(corpus_dir)
    words = [w for case in cases.values()
             for par in case.paragraphs for w in par.words]
    vocab = _vocab_from_words(words)

    tk = Tokenizer(models.WordPiece(vocab, unk_token="[UNK]",
                                    continuing_subword_prefix="##"))
    tk.normalizer = normalizers.BertNormalizer(lowercase=True)
    tk.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tk.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]", pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
        model_max_length=max_length)
    tokenizer.save_pretrained(out)

    torch.manual_seed(seed)
    config = BertConfig(vocab_size=len(vocab), hidden_size=hidden_size,
                        num_hidden_layers=num_layers,
                        num_attention_heads=num_heads,
                        intermediate_size=hidden_size * 2,
                        max_position_embeddings=max_length,
                        pad_token_id=vocab["[PAD]"])
    BertModel(config).save_pretrained(out)
    return out
