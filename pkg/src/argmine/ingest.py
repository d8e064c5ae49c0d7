"""Turning raw court decisions into structured cases.

Covers the deterministic rule-based tokenizer, paragraph segmentation for
plain text and HTML, section-heading detection (PROCEDURE, THE FACTS, THE
LAW, FOR THESE REASONS) and trimming a case down to its law section.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from html.parser import HTMLParser
from pathlib import Path
from typing import Optional

from .corpus import AnnotatedCase, CorpusError, ImportanceLevel, Paragraph, Token


class MalformedDocument(CorpusError):
    pass


class EncodingError(CorpusError):
    pass


class LawSectionNotFound(CorpusError):
    pass


# ---------------------------------------------------------------------------
# tokenizer

def _is_punct(ch: str) -> bool:
    return not ch.isalnum()


def tokenize(text: str) -> tuple[Token, ...]:
    """Deterministic rule-based tokenization with UTF-8 byte offsets.

    Whitespace splits; leading and trailing punctuation peels off as
    single-character tokens (the apostrophe included); a chunk that is all
    punctuation stays whole; internal punctuation between alphanumerics is
    kept, so citation shapes like "10730/84" survive as one token.

        "The applicant (no. 10730/84) appealed."
        -> The applicant ( no . 10730/84 ) appealed .
    """
    # byte offset of each character position
    offsets = [0]
    for ch in text:
        offsets.append(offsets[-1] + len(ch.encode("utf-8")))

    out: list[Token] = []

    def emit(a: int, b: int) -> None:
        out.append(Token(text[a:b], offsets[a], offsets[b]))

    for m in re.finditer(r"\S+", text):
        a, b = m.start(), m.end()
        if all(_is_punct(ch) for ch in text[a:b]):
            emit(a, b)
            continue
        while _is_punct(text[a]):
            emit(a, a + 1)
            a += 1
        tail = []
        while _is_punct(text[b - 1]):
            tail.append((b - 1, b))
            b -= 1
        emit(a, b)
        for ta, tb in reversed(tail):
            emit(ta, tb)
    return tuple(out)


# ---------------------------------------------------------------------------
# sections

SECTION_KINDS = ("procedure", "facts", "law", "operative")


@dataclass(frozen=True)
class SectionMarker:
    kind: str
    paragraph_index: int
    paragraph_id: str


def _heading_kind(text: str) -> Optional[str]:
    t = " ".join(text.split()).upper()
    if t == "THE LAW" or t.startswith("AS TO THE LAW"):
        return "law"
    if t == "THE FACTS" or t.startswith("AS TO THE FACTS"):
        return "facts"
    if t.startswith("PROCEDURE"):
        return "procedure"
    if t.startswith("FOR THESE REASONS"):
        return "operative"
    return None


def detect_sections(case: AnnotatedCase) -> tuple[SectionMarker, ...]:
    """First heading of each kind, in document order."""
    seen: dict[str, SectionMarker] = {}
    for i, p in enumerate(case.paragraphs):
        kind = _heading_kind(p.text)
        if kind is not None and kind not in seen:
            seen[kind] = SectionMarker(kind, i, p.id)
    return tuple(sorted(seen.values(), key=lambda m: m.paragraph_index))


# ---------------------------------------------------------------------------
# extraction

_PAR_NUMBER = re.compile(r"(\d+)\.\s+")


def _blocks_to_case(blocks: list[str], case_id: str, article, importance) -> AnnotatedCase:
    texts = [" ".join(b.split()) for b in blocks]
    texts = [t for t in texts if t]
    if not texts:
        raise MalformedDocument(f"{case_id}: no paragraphs found")
    paragraphs = []
    for i, t in enumerate(texts):
        m = _PAR_NUMBER.match(t)
        pid = m.group(1) if m else f"p{i}"
        paragraphs.append(Paragraph(pid, t, tokenize(t), False))
    case = AnnotatedCase(case_id, article,
                         None if importance is None else ImportanceLevel(importance),
                         tuple(paragraphs), (), {})
    law = next((m for m in detect_sections(case) if m.kind == "law"), None)
    if law is not None:
        flagged = tuple(replace(p, in_law_section=(i >= law.paragraph_index))
                        for i, p in enumerate(case.paragraphs))
        case = replace(case, paragraphs=flagged)
    return case


class _TextExtractor(HTMLParser):
    BLOCK = {"p", "div", "br", "li", "ul", "ol", "tr", "table", "blockquote",
             "h1", "h2", "h3", "h4", "h5", "h6", "section", "article", "title"}
    SKIP = {"script", "style"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.blocks: list[str] = [""]
        self._skip = 0

    def _break(self):
        if self.blocks[-1].strip():
            self.blocks.append("")

    def handle_starttag(self, tag, attrs):
        if tag in self.SKIP:
            self._skip += 1
        elif tag in self.BLOCK:
            self._break()

    def handle_endtag(self, tag):
        if tag in self.SKIP:
            self._skip = max(0, self._skip - 1)
        elif tag in self.BLOCK:
            self._break()

    def handle_data(self, data):
        if not self._skip:
            self.blocks[-1] += data


def extract_case(source: str, case_id: str, fmt: str = "text",
                 article: Optional[int] = None,
                 importance: Optional[int] = None) -> AnnotatedCase:
    """Parse one decision into paragraphs with tokens and section flags.

    `fmt` is "text" (paragraphs split on blank lines) or "html" (tags
    stripped, block elements bound paragraphs, script/style dropped).
    Court-numbered paragraphs keep the number as id ("22" for a paragraph
    starting "22. In the applicants..."); the rest get "p<index>".
    """
    if fmt == "text":
        blocks = re.split(r"\n\s*\n", source)
    elif fmt == "html":
        parser = _TextExtractor()
        parser.feed(source)
        parser.close()
        blocks = parser.blocks
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return _blocks_to_case(blocks, case_id, article, importance)


def read_document(path: Path | str) -> str:
    """Read a document as UTF-8; undecodable bytes raise EncodingError."""
    try:
        return Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise EncodingError(f"{path}: not valid UTF-8 ({e})") from None


# ---------------------------------------------------------------------------
# law-section trimming

def trim_to_law(case: AnnotatedCase) -> AnnotatedCase:
    """Keep the law section onward; idempotent.

    The heading paragraph itself is retained.  Gold spans and annotator
    layers referencing dropped paragraphs are dropped with the paragraphs.
    Raises LawSectionNotFound when no law heading exists and the case is
    not already trimmed.
    """
    if case.paragraphs and all(p.in_law_section for p in case.paragraphs):
        return case
    law = next((m for m in detect_sections(case) if m.kind == "law"), None)
    if law is None:
        raise LawSectionNotFound(f"{case.case_id}: no law-section heading")
    kept = tuple(replace(p, in_law_section=True)
                 for p in case.paragraphs[law.paragraph_index:])
    ids = {p.id for p in kept}
    return replace(
        case,
        paragraphs=kept,
        gold_spans=tuple(s for s in case.gold_spans if s.paragraph_id in ids),
        raw_annotator_layers={a: tuple(s for s in spans if s.paragraph_id in ids)
                              for a, spans in case.raw_annotator_layers.items()})
