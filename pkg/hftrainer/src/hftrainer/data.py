"""Readers and writers for the corpus interchange formats.

Only files are shared with the annotation toolkit: case JSON, split JSON
and the five-column prediction TSV.  Token offsets in case JSON are byte
offsets into the UTF-8 encoded paragraph text.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from .labels import ACTORS, ARG_TYPES


class DataError(Exception):
    pass


@dataclass(frozen=True)
class ParagraphExample:
    case_id: str
    paragraph_id: str
    words: Tuple[str, ...]
    arg_tags: Tuple[str, ...]
    actor_tags: Tuple[str, ...]


@dataclass(frozen=True)
class Case:
    case_id: str
    paragraphs: Tuple[ParagraphExample, ...]


def _words(text: str, tokens: Sequence[dict]) -> List[str]:
    raw = text.encode("utf-8")
    return [raw[t["start"]:t["end"]].decode("utf-8") for t in tokens]


def _bio(n: int, spans: Iterable[dict], key: str, table: Dict[str, str]) -> List[str]:
    tags = ["O"] * n
    for s in spans:
        member = s.get(key)
        if member is None:
            continue
        label = table.get(member)
        if label is None:
            raise DataError(f"unknown {key} category {member!r}")
        start, end = s["tok_start"], s["tok_end"]
        if not 0 <= start < end <= n:
            raise DataError(f"span [{start},{end}) outside paragraph of {n} tokens")
        tags[start] = f"B-{label}"
        for i in range(start + 1, end):
            tags[i] = f"I-{label}"
    return tags


def read_case(path: Path | str) -> Case:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    by_par: Dict[str, list] = {}
    for s in doc.get("gold_spans", []):
        by_par.setdefault(s["paragraph_id"], []).append(s)
    paragraphs = []
    for par in doc["paragraphs"]:
        words = _words(par["text"], par["tokens"])
        spans = by_par.get(par["id"], [])
        paragraphs.append(ParagraphExample(
            doc["case_id"], par["id"], tuple(words),
            tuple(_bio(len(words), spans, "arg_type", ARG_TYPES)),
            tuple(_bio(len(words), spans, "actor", ACTORS))))
    return Case(doc["case_id"], tuple(paragraphs))


def read_corpus(directory: Path | str) -> Dict[str, Case]:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"not a corpus directory: {directory}")
    cases = {}
    for path in sorted(directory.glob("*.json")):
        case = read_case(path)
        cases[case.case_id] = case
    if not cases:
        raise DataError(f"no case files in {directory}")
    return cases


def read_split(path: Path | str) -> Tuple[Tuple[str, ...], Tuple[str, ...], Tuple[str, ...]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return tuple(doc["train"]), tuple(doc["dev"]), tuple(doc["test"])
    except KeyError as e:
        raise DataError(f"split file missing section {e}") from None


@dataclass(frozen=True)
class PredictionRow:
    example: ParagraphExample
    pred_arg: Tuple[str, ...]
    pred_actor: Tuple[str, ...]


def write_predictions(path: Path | str, rows: Iterable[PredictionRow],
                      header_comments: Sequence[str] = ()) -> None:
    """Five-column interchange layout, one block per paragraph."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        for row in rows:
            ex = row.example
            fh.write(f"# case={ex.case_id} par={ex.paragraph_id}\n")
            for values in zip(ex.words, ex.arg_tags, ex.actor_tags,
                              row.pred_arg, row.pred_actor):
                fh.write("\t".join(values) + "\n")
            fh.write("\n")
