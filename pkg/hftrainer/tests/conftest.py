"""Fixture corpora are produced with the annotation toolkit, exactly as
a user would, and handed to hftrainer as files on disk."""
import os
from random import Random

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")

from argmine.corpus import (Actor, AnnotatedCase, ArgType, ArgumentSpan,
                            CorpusSplit, Paragraph, Token, save_case,
                            save_split)

WORDS = ["the", "court", "considers", "that", "refusal", "interference",
         "necessity", "margin", "applicant", "state", "proportionate",
         "legitimate", "aim", "law", "notes", "article"]


def _paragraph(pid, words):
    toks, pos = [], 0
    for w in words:
        n = len(w.encode("utf-8"))
        toks.append(Token(w, pos, pos + n))
        pos += n + 1
    return Paragraph(str(pid), " ".join(words), tuple(toks), True)


def build_case(case_id, n_paragraphs=3, seed=0, importance=1):
    rng = Random(seed)
    paragraphs, spans = [], []
    for p in range(n_paragraphs):
        words = [rng.choice(WORDS) for _ in range(12)]
        pid = str(p + 1)
        paragraphs.append(_paragraph(pid, words))
        spans.append(ArgumentSpan(pid, 1, 5, rng.choice(list(ArgType)),
                                  rng.choice(list(Actor))))
        spans.append(ArgumentSpan(pid, 6, 10, rng.choice(list(ArgType)),
                                  rng.choice(list(Actor))))
    return AnnotatedCase(case_id, 8, importance, tuple(paragraphs),
                         tuple(spans), {})


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    ids = []
    for i in range(5):
        case = build_case(f"case{i}", seed=i, importance=(i % 4) + 1)
        save_case(case, d / f"case{i}.json")
        ids.append(case.case_id)
    return d


@pytest.fixture(scope="session")
def split_path(corpus_dir, tmp_path_factory):
    path = tmp_path_factory.mktemp("split") / "split.json"
    ids = [f"case{i}" for i in range(5)]
    save_split(CorpusSplit(tuple(ids), (ids[0],), (ids[1],)), path)
    return path
