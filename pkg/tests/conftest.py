"""Shared builders for synthetic cases and corpora."""

from __future__ import annotations

from random import Random

import pytest

from argmine.corpus import (Actor, AnnotatedCase, ArgType, ArgumentSpan, ImportanceLevel,
                            Paragraph, Token)

WORDS = ["court", "notes", "that", "the", "applicant", "state", "law", "refusal",
         "margin", "necessity", "appeal", "holds", "article", "interference", "aim"]


def tokens_for(words):
    """Tokens with single-space joins; offsets are UTF-8 byte offsets."""
    toks, pos = [], 0
    for w in words:
        b = len(w.encode("utf-8"))
        toks.append(Token(w, pos, pos + b))
        pos += b + 1
    return tuple(toks)


def make_paragraph(pid, words, in_law=True):
    return Paragraph(str(pid), " ".join(words), tokens_for(words), in_law)


def make_case(case_id, n_paragraphs=3, spans_per_par=2, seed=0, article=8,
              importance=None, par_len=12, annotators=()):
    """A valid case with non-overlapping dual-labeled spans.

    Spans are placed on a fixed grid so any (n_paragraphs, spans_per_par)
    combination stays structurally valid.
    """
    rng = Random(seed)
    paragraphs, gold = [], []
    arg_types, actors = list(ArgType), list(Actor)
    for i in range(n_paragraphs):
        words = [rng.choice(WORDS) for _ in range(par_len)]
        pid = str(i + 1)
        paragraphs.append(make_paragraph(pid, words))
        for k in range(spans_per_par):
            start = k * (par_len // max(spans_per_par, 1))
            end = start + max(2, par_len // (2 * max(spans_per_par, 1)))
            end = min(end, par_len)
            gold.append(ArgumentSpan(pid, start, end, rng.choice(arg_types),
                                     rng.choice(actors)))
    layers = {}
    for ann in annotators:
        jig = Random(f"{seed}-{ann}")
        spans = []
        for s in gold:
            shift = jig.choice([0, 0, 1])
            par = next(p for p in paragraphs if p.id == s.paragraph_id)
            start = min(s.tok_start + shift, len(par) - 1)
            end = max(start + 1, min(s.tok_end + jig.choice([0, -1]), len(par)))
            spans.append(ArgumentSpan(s.paragraph_id, start, end, s.arg_type,
                                      s.actor, annotator_id=ann))
        layers[ann] = _drop_overlaps(spans)
    return AnnotatedCase(case_id, article,
                         None if importance is None else ImportanceLevel(importance),
                         tuple(paragraphs), tuple(gold), layers)


def _drop_overlaps(spans):
    kept = []
    last_end = {}
    for s in sorted(spans, key=lambda s: (s.paragraph_id, s.tok_start, s.tok_end)):
        if s.tok_start >= last_end.get(s.paragraph_id, 0):
            kept.append(s)
            last_end[s.paragraph_id] = s.tok_end
    return tuple(kept)


def make_corpus(n_cases=20, seed=0, importance_cycle=(1, 2, 3, 4)):
    """Synthetic corpus; every label occurs reasonably often."""
    rng = Random(seed)
    cases = []
    for i in range(n_cases):
        cases.append(make_case(
            f"case{i:04d}", n_paragraphs=rng.randint(2, 4),
            spans_per_par=rng.randint(2, 3), seed=seed * 100003 + i,
            article=rng.choice([3, 7, 8]),
            importance=importance_cycle[i % len(importance_cycle)]))
    return cases


@pytest.fixture
def small_case():
    return make_case("demo", n_paragraphs=3, spans_per_par=2, seed=7)


@pytest.fixture
def small_corpus():
    return make_corpus(12, seed=3)
