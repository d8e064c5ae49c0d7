"""BIO encoding between argument spans and per-token label sequences.

Two independent dimensions share one span layer: "arg" tags carry the
argument type, "actor" tags the arguing party.  Tag surface forms use the
short label names ("B-Application case", "I-ECHR", "O"), 31 argument tags
and 11 actor tags in total.

The module also owns the prediction/gold TSV interchange (five columns:
token, gold_type, gold_actor, pred_type, pred_actor; paragraphs separated
by blank lines and announced by "# case=<id> par=<id>" comments) and the
first-piece rule that lifts subword predictions back to tokens.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .corpus import (Actor, ArgType, ArgumentSpan, CorpusError, Paragraph,
                     actor_tag_names, arg_tag_names)

IGNORE = "-100"  # sentinel for subword positions excluded from the loss

DIMENSIONS = ("arg", "actor")

_ARG_BY_SHORT = {t.short: t for t in ArgType}
_ACTOR_BY_SHORT = {a.short: a for a in Actor}


class OverlappingSpans(CorpusError):
    pass


class SpanOutOfBounds(CorpusError):
    pass


class InvalidSequence(CorpusError):
    pass


class AlignmentMismatch(CorpusError):
    pass


@dataclass(frozen=True)
class LabelSequence:
    dimension: str
    paragraph_id: str
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)


def tag_names(dimension: str) -> list[str]:
    if dimension == "arg":
        return arg_tag_names()
    if dimension == "actor":
        return actor_tag_names()
    raise ValueError(f"unknown dimension {dimension!r}")


def _member_short(span: ArgumentSpan, dimension: str) -> str:
    member = span.arg_type if dimension == "arg" else span.actor
    if member is None:
        raise ValueError(f"span in paragraph {span.paragraph_id} lacks a "
                         f"{dimension} label")
    return member.short


def parse_tag(tag: str, dimension: str):
    """Split a BIO tag into (prefix, enum member); ("O", None) for O."""
    if tag == "O":
        return "O", None
    if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
        raise InvalidSequence(f"malformed tag {tag!r}")
    table = _ARG_BY_SHORT if dimension == "arg" else _ACTOR_BY_SHORT
    member = table.get(tag[2:])
    if member is None:
        raise InvalidSequence(f"unknown {dimension} label in tag {tag!r}")
    return tag[0], member


def encode_bio(paragraph: Paragraph, spans: Sequence[ArgumentSpan],
               dimension: str) -> LabelSequence:
    """Project the paragraph's spans onto one BIO label per token."""
    labels = ["O"] * len(paragraph)
    for s in sorted(spans, key=lambda s: (s.tok_start, s.tok_end)):
        if s.paragraph_id != paragraph.id:
            continue
        if not (0 <= s.tok_start < s.tok_end <= len(paragraph)):
            raise SpanOutOfBounds(
                f"[{s.tok_start},{s.tok_end}) outside paragraph {paragraph.id} "
                f"of {len(paragraph)} tokens")
        short = _member_short(s, dimension)
        for i in range(s.tok_start, s.tok_end):
            if labels[i] != "O":
                raise OverlappingSpans(
                    f"token {i} of paragraph {paragraph.id} covered twice")
            labels[i] = f"{'B' if i == s.tok_start else 'I'}-{short}"
    return LabelSequence(dimension, paragraph.id, tuple(labels))


def decode_bio(seq: LabelSequence, strict: bool = True) -> list[ArgumentSpan]:
    """Rebuild spans from a label sequence; only `seq.dimension` is populated.

    With `strict` an orphan I tag (no open span of the same label) raises
    InvalidSequence; otherwise it opens a new span, mirroring repair_bio.
    """
    spans: list[ArgumentSpan] = []
    open_start: Optional[int] = None
    open_member = None

    def close(end: int) -> None:
        nonlocal open_start, open_member
        if open_start is not None:
            kw = {"arg_type": open_member} if seq.dimension == "arg" else {"actor": open_member}
            spans.append(ArgumentSpan(seq.paragraph_id, open_start, end, **kw))
            open_start, open_member = None, None

    for i, tag in enumerate(seq.labels):
        prefix, member = parse_tag(tag, seq.dimension)
        if prefix == "O":
            close(i)
        elif prefix == "B":
            close(i)
            open_start, open_member = i, member
        else:  # I
            if open_member is member:
                continue
            if strict:
                raise InvalidSequence(f"orphan {tag!r} at position {i}")
            close(i)
            open_start, open_member = i, member
    close(len(seq.labels))
    return spans


def repair_bio(seq: LabelSequence) -> LabelSequence:
    """Rewrite the minimal set of tags so the sequence decodes cleanly.

    An I tag whose predecessor does not continue the same label becomes the
    matching B tag (never O).  Idempotent; valid input passes unchanged.
    """
    repaired: list[str] = []
    open_member = None
    for tag in seq.labels:
        prefix, member = parse_tag(tag, seq.dimension)
        if prefix == "O":
            open_member = None
            repaired.append(tag)
        elif prefix == "B":
            open_member = member
            repaired.append(tag)
        else:
            if open_member is not member:
                repaired.append(f"B-{tag[2:]}")
            else:
                repaired.append(tag)
            open_member = member
    return LabelSequence(seq.dimension, seq.paragraph_id, tuple(repaired))


# ---------------------------------------------------------------------------
# subword mapping

@dataclass(frozen=True)
class SubwordAlignment:
    """piece_counts[i] = number of consecutive subword pieces of token i."""

    piece_counts: tuple[int, ...]

    @property
    def total_pieces(self) -> int:
        return sum(self.piece_counts)


def map_subword_predictions(piece_labels: Sequence[str],
                            alignment: SubwordAlignment) -> list[str]:
    """First-piece rule: each token takes the label of its first piece.

    Labels on non-initial pieces (usually the -100 sentinel) are ignored
    whatever they are.  A sentinel on an initial piece maps to "O".
    """
    if alignment.total_pieces != len(piece_labels):
        raise AlignmentMismatch(
            f"{len(piece_labels)} piece labels for {alignment.total_pieces} pieces")
    out: list[str] = []
    pos = 0
    for count in alignment.piece_counts:
        if count < 1:
            raise AlignmentMismatch("every token needs at least one piece")
        first = piece_labels[pos]
        out.append("O" if first == IGNORE else first)
        pos += count
    return out


# ---------------------------------------------------------------------------
# TSV interchange

@dataclass(frozen=True)
class ParagraphRecord:
    case_id: str
    paragraph_id: str
    tokens: tuple[str, ...]
    gold_arg: tuple[str, ...]
    gold_actor: tuple[str, ...]
    pred_arg: tuple[str, ...]
    pred_actor: tuple[str, ...]

    def __post_init__(self):
        n = len(self.tokens)
        for f in (self.gold_arg, self.gold_actor, self.pred_arg, self.pred_actor):
            if len(f) != n:
                raise AlignmentMismatch(
                    f"{self.case_id}/{self.paragraph_id}: column length != {n} tokens")


_CASE_LINE = re.compile(r"#\s*case=(\S+)\s+par=(\S+)\s*$")


def write_tsv(target: Union[Path, str, io.TextIOBase],
              records: Iterable[ParagraphRecord],
              header_comments: Sequence[str] = ()) -> None:
    """Write paragraph records in the five-column interchange layout."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        for line in header_comments:
            fh.write(f"# {line}\n")
        for rec in records:
            fh.write(f"# case={rec.case_id} par={rec.paragraph_id}\n")
            for tok, ga, gc, pa, pc in zip(rec.tokens, rec.gold_arg, rec.gold_actor,
                                           rec.pred_arg, rec.pred_actor):
                fh.write(f"{tok}\t{ga}\t{gc}\t{pa}\t{pc}\n")
            fh.write("\n")
    finally:
        if own:
            fh.close()


def read_tsv(source: Union[Path, str, io.TextIOBase]) -> list[ParagraphRecord]:
    """Parse the interchange layout back into paragraph records.

    Comment lines other than the case/par announcements are skipped, so
    files may carry metadata headers.
    """
    own = isinstance(source, (str, Path))
    fh = open(source, "r", encoding="utf-8") if own else source
    records: list[ParagraphRecord] = []
    case_id, par_id = None, None
    cols: list[list[str]] = [[], [], [], [], []]

    def flush() -> None:
        nonlocal cols
        if case_id is not None and cols[0]:
            records.append(ParagraphRecord(case_id, par_id, *(tuple(c) for c in cols)))
        cols = [[], [], [], [], []]

    try:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                flush()
                continue
            if line.startswith("#"):
                m = _CASE_LINE.match(line)
                if m:
                    flush()
                    case_id, par_id = m.group(1), m.group(2)
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise InvalidSequence(f"line {lineno}: expected 5 columns, got {len(parts)}")
            if case_id is None:
                raise InvalidSequence(f"line {lineno}: data before any case comment")
            for c, p in zip(cols, parts):
                c.append(p)
        flush()
    finally:
        if own:
            fh.close()
    return records


def case_records(case, predictions=None) -> list[ParagraphRecord]:
    """Gold records for every paragraph of a case.

    `predictions`, when given, maps paragraph id to a (arg_labels,
    actor_labels) pair; otherwise prediction columns hold "O" placeholders.
    """
    out = []
    for p in case.paragraphs:
        spans = [s for s in case.gold_spans if s.paragraph_id == p.id]
        gold_arg = encode_bio(p, spans, "arg").labels
        gold_actor = encode_bio(p, spans, "actor").labels
        if predictions and p.id in predictions:
            pred_arg, pred_actor = predictions[p.id]
            pred_arg, pred_actor = tuple(pred_arg), tuple(pred_actor)
        else:
            pred_arg = pred_actor = ("O",) * len(p)
        out.append(ParagraphRecord(case.case_id, p.id, tuple(t.text for t in p.tokens),
                                   gold_arg, gold_actor, pred_arg, pred_actor))
    return out
