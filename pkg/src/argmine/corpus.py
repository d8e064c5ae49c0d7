"""Data model for dual-labeled argument corpora.

Cases, paragraphs, tokens and argument spans, plus the operations the rest
of the toolkit builds on: structural validation, corpus statistics and
stratified splitting.  Everything here is immutable after construction and
all functions are pure, so instances can be shared freely across workers.

Interchange schema (one JSON object per case):

    {"case_id": ..., "article": 8, "importance": 1,
     "paragraphs": [{"id": "22", "text": ..., "tokens": [{"start": 0, "end": 2}, ...],
                     "in_law_section": true}, ...],
     "gold_spans": [{"paragraph_id": "22", "tok_start": 2, "tok_end": 15,
                     "arg_type": "ApplicationCase", "actor": "Applicant"}, ...],
     "annotator_layers": [... same span objects with "annotator_id" ...]}

Token offsets are byte offsets into the UTF-8 encoding of the paragraph
text.  Enum members serialize under their wire names (``ArgType.value``).
"""

from __future__ import annotations

import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Optional, Sequence


class CorpusError(Exception):
    """Base class for data-level failures in this package."""


class EmptyCorpus(CorpusError):
    pass


class InfeasibleStratification(UserWarning):
    """A label cannot reach every split; the split falls back to best effort."""


class ArgType(str, Enum):
    """Argument type scheme, fifteen categories.

    Values are the wire names used in JSON.  ``short`` is the surface name
    used in BIO tags and report tables.
    """

    NonContestation = "NonContestation"
    TextualInterpretation = "TextualInterpretation"
    SystematicInterpretation = "SystematicInterpretation"
    TeleologicalInterpretation = "TeleologicalInterpretation"
    ComparativeLaw = "ComparativeLaw"
    LegalBasis = "LegalBasis"
    LegitimatePurpose = "LegitimatePurpose"
    Suitability = "Suitability"
    NecessityProportionality = "NecessityProportionality"
    Overruling = "Overruling"
    Distinguishing = "Distinguishing"
    MarginOfAppreciation = "MarginOfAppreciation"
    PrecedentsECHR = "PrecedentsECHR"
    DecisionECHR = "DecisionECHR"
    ApplicationCase = "ApplicationCase"

    @property
    def short(self) -> str:
        return _ARG_SHORT[self]


_ARG_SHORT = {
    ArgType.NonContestation: "Non contestation",
    ArgType.TextualInterpretation: "Textual interpretation",
    ArgType.SystematicInterpretation: "Systematic interpretation",
    ArgType.TeleologicalInterpretation: "Teleological interpretation",
    ArgType.ComparativeLaw: "Comparative law",
    ArgType.LegalBasis: "Legal basis",
    ArgType.LegitimatePurpose: "Legitimate purpose",
    ArgType.Suitability: "Suitability",
    ArgType.NecessityProportionality: "Necessity/Proportionality",
    ArgType.Overruling: "Overruling",
    ArgType.Distinguishing: "Distinguishing",
    ArgType.MarginOfAppreciation: "Margin of Appreciation",
    ArgType.PrecedentsECHR: "Precedents ECHR",
    ArgType.DecisionECHR: "Decision ECHR",
    ArgType.ApplicationCase: "Application case",
}


class Actor(str, Enum):
    """Who advances an argument."""

    ECHR = "ECHR"
    Applicant = "Applicant"
    State = "State"
    ThirdParties = "ThirdParties"
    CommissionChamber = "CommissionChamber"

    @property
    def short(self) -> str:
        return _ACTOR_SHORT[self]


_ACTOR_SHORT = {
    Actor.ECHR: "ECHR",
    Actor.Applicant: "Applicant",
    Actor.State: "State",
    Actor.ThirdParties: "Third parties",
    Actor.CommissionChamber: "Commission/Chamber",
}


class ImportanceLevel(IntEnum):
    """HUDOC importance, 1 (key case) down to 4 (least important)."""

    KEY = 1
    HIGH = 2
    MEDIUM = 3
    LOW = 4


VALID_ARTICLES = (3, 7, 8)
MIN_GOLD_SPANS = 5


@dataclass(frozen=True)
class Token:
    text: str
    char_start: int  # byte offset into UTF-8 paragraph text
    char_end: int


@dataclass(frozen=True)
class Paragraph:
    id: str
    text: str
    tokens: tuple[Token, ...]
    in_law_section: bool = False

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class ArgumentSpan:
    """Half-open token interval [tok_start, tok_end) inside one paragraph.

    Gold spans carry both labels; spans decoded from a single BIO dimension
    carry only that dimension, the other is None.
    """

    paragraph_id: str
    tok_start: int
    tok_end: int
    arg_type: Optional[ArgType] = None
    actor: Optional[Actor] = None
    annotator_id: Optional[str] = None

    @property
    def length(self) -> int:
        return self.tok_end - self.tok_start


@dataclass(frozen=True)
class AnnotatedCase:
    case_id: str
    article: Optional[int]
    importance: Optional[ImportanceLevel]
    paragraphs: tuple[Paragraph, ...]
    gold_spans: tuple[ArgumentSpan, ...]
    raw_annotator_layers: Mapping[str, tuple[ArgumentSpan, ...]] = field(default_factory=dict)

    def paragraph_by_id(self, pid: str) -> Optional[Paragraph]:
        for p in self.paragraphs:
            if p.id == pid:
                return p
        return None

    def token_count(self) -> int:
        return sum(len(p) for p in self.paragraphs)

    def law_paragraphs(self) -> tuple[Paragraph, ...]:
        return tuple(p for p in self.paragraphs if p.in_law_section)


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]

    def all_ids(self) -> tuple[str, ...]:
        return self.train + self.dev + self.test


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    paragraph_id: Optional[str] = None
    span: Optional[ArgumentSpan] = None


@dataclass(frozen=True)
class ValidationReport:
    case_id: str
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _validate_layer(case: AnnotatedCase, spans: Sequence[ArgumentSpan], layer: str,
                    out: list[Violation], require_labels: bool) -> None:
    by_par: dict[str, list[ArgumentSpan]] = defaultdict(list)
    for s in spans:
        par = case.paragraph_by_id(s.paragraph_id)
        if par is None:
            out.append(Violation("span-paragraph",
                                 f"{layer}: span references unknown paragraph {s.paragraph_id!r}",
                                 s.paragraph_id, s))
            continue
        if not (0 <= s.tok_start < s.tok_end <= len(par)):
            out.append(Violation("span-bounds",
                                 f"{layer}: [{s.tok_start},{s.tok_end}) outside 0..{len(par)}",
                                 s.paragraph_id, s))
            continue
        if require_labels and (s.arg_type is None or s.actor is None):
            out.append(Violation("span-labels",
                                 f"{layer}: span missing arg_type or actor",
                                 s.paragraph_id, s))
            continue
        by_par[s.paragraph_id].append(s)
    for pid, group in by_par.items():
        group = sorted(group, key=lambda s: (s.tok_start, s.tok_end))
        for prev, cur in zip(group, group[1:]):
            if cur.tok_start < prev.tok_end:
                out.append(Violation("span-overlap",
                                     f"{layer}: [{prev.tok_start},{prev.tok_end}) overlaps "
                                     f"[{cur.tok_start},{cur.tok_end}) in paragraph {pid}",
                                     pid, cur))


def validate_case(case: AnnotatedCase) -> ValidationReport:
    """Check every structural invariant; violations come back as data.

    Rules: paragraph-id-duplicate, token-bounds, token-text, token-order,
    article-value, importance-value, span-paragraph, span-bounds,
    span-labels, span-overlap, min-spans.
    """
    out: list[Violation] = []

    seen: set[str] = set()
    for p in case.paragraphs:
        if p.id in seen:
            out.append(Violation("paragraph-id-duplicate",
                                 f"paragraph id {p.id!r} appears more than once", p.id))
        seen.add(p.id)

    for p in case.paragraphs:
        raw = p.text.encode("utf-8")
        prev_end = 0
        for i, t in enumerate(p.tokens):
            if not (0 <= t.char_start < t.char_end <= len(raw)):
                out.append(Violation("token-bounds",
                                     f"token {i} offsets [{t.char_start},{t.char_end}) "
                                     f"outside 0..{len(raw)}", p.id))
                continue
            if raw[t.char_start:t.char_end].decode("utf-8", "replace") != t.text:
                out.append(Violation("token-text",
                                     f"token {i} text does not match its byte slice", p.id))
            if t.char_start < prev_end:
                out.append(Violation("token-order",
                                     f"token {i} starts before the previous token ends", p.id))
            prev_end = max(prev_end, t.char_end)

    if case.article is not None and case.article not in VALID_ARTICLES:
        out.append(Violation("article-value", f"article {case.article!r} not one of {VALID_ARTICLES}"))
    if case.importance is not None and int(case.importance) not in (1, 2, 3, 4):
        out.append(Violation("importance-value", f"importance {case.importance!r} outside 1..4"))

    _validate_layer(case, case.gold_spans, "gold", out, require_labels=True)
    for ann, spans in case.raw_annotator_layers.items():
        _validate_layer(case, spans, f"annotator {ann}", out, require_labels=False)

    if len(case.gold_spans) < MIN_GOLD_SPANS:
        out.append(Violation("min-spans",
                             f"{len(case.gold_spans)} gold spans, minimum is {MIN_GOLD_SPANS}"))

    return ValidationReport(case.case_id, tuple(out))


# ---------------------------------------------------------------------------
# statistics

def arg_tag_names() -> list[str]:
    """All 31 argument BIO tags: O plus B-/I- per category."""
    names = ["O"]
    for t in ArgType:
        names.extend([f"B-{t.short}", f"I-{t.short}"])
    return names


def actor_tag_names() -> list[str]:
    names = ["O"]
    for a in Actor:
        names.extend([f"B-{a.short}", f"I-{a.short}"])
    return names


@dataclass(frozen=True)
class StatsTable:
    """Span tallies per label and token tallies per BIO tag, with percentages."""

    arg_span_counts: Mapping[str, int]
    actor_span_counts: Mapping[str, int]
    arg_span_pct: Mapping[str, float]
    actor_span_pct: Mapping[str, float]
    arg_tag_counts: Mapping[str, int]
    actor_tag_counts: Mapping[str, int]
    arg_tag_pct: Mapping[str, float]
    actor_tag_pct: Mapping[str, float]
    total_spans: int
    total_tokens: int

    def rows(self, table: str) -> list[tuple[str, int, float]]:
        """(label, count, pct) sorted by decreasing count, then label."""
        counts, pct = {
            "arg_spans": (self.arg_span_counts, self.arg_span_pct),
            "actor_spans": (self.actor_span_counts, self.actor_span_pct),
            "arg_tags": (self.arg_tag_counts, self.arg_tag_pct),
            "actor_tags": (self.actor_tag_counts, self.actor_tag_pct),
        }[table]
        return sorted(((k, counts[k], pct[k]) for k in counts),
                      key=lambda r: (-r[1], r[0]))


def _pct(counts: Mapping[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        return {k: 0.0 for k in counts}
    return {k: 100.0 * v / total for k, v in counts.items()}


def corpus_stats(cases: Sequence[AnnotatedCase]) -> StatsTable:
    """Tally spans per label and tokens per BIO tag over `cases`.

    Expects validated cases.  Counts are order-independent.
    """
    if not cases:
        raise EmptyCorpus("no cases")
    arg_spans: Counter = Counter()
    actor_spans: Counter = Counter()
    arg_tags: Counter = Counter()
    actor_tags: Counter = Counter()
    total_tokens = 0
    for case in cases:
        spans_by_par: dict[str, list[ArgumentSpan]] = defaultdict(list)
        for s in case.gold_spans:
            arg_spans[s.arg_type.short] += 1
            actor_spans[s.actor.short] += 1
            spans_by_par[s.paragraph_id].append(s)
        for p in case.paragraphs:
            n = len(p)
            total_tokens += n
            covered = 0
            for s in spans_by_par.get(p.id, ()):
                arg_tags[f"B-{s.arg_type.short}"] += 1
                actor_tags[f"B-{s.actor.short}"] += 1
                inner = s.length - 1
                arg_tags[f"I-{s.arg_type.short}"] += inner
                actor_tags[f"I-{s.actor.short}"] += inner
                covered += s.length
            arg_tags["O"] += n - covered
            actor_tags["O"] += n - covered
    return StatsTable(
        arg_span_counts=dict(arg_spans), actor_span_counts=dict(actor_spans),
        arg_span_pct=_pct(arg_spans), actor_span_pct=_pct(actor_spans),
        arg_tag_counts=dict(arg_tags), actor_tag_counts=dict(actor_tags),
        arg_tag_pct=_pct(arg_tags), actor_tag_pct=_pct(actor_tags),
        total_spans=sum(arg_spans.values()), total_tokens=total_tokens)


# ---------------------------------------------------------------------------
# stratified split

def apportion(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder sizes for ratios over n items; sums to exactly n."""
    exact = [r * n for r in ratios]
    base = [int(x) for x in exact]
    short = n - sum(base)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def _case_labels(case: AnnotatedCase) -> Counter:
    c: Counter = Counter()
    for s in case.gold_spans:
        if s.arg_type is not None:
            c[("arg", s.arg_type.value)] += 1
        if s.actor is not None:
            c[("actor", s.actor.value)] += 1
    return c


def stratified_split(cases: Sequence[AnnotatedCase], ratios: Sequence[float] = (0.8, 0.1, 0.1),
                     seed: int = 0) -> CorpusSplit:
    """Deterministic stratified train/dev/test split by case.

    Greedy assignment in descending order of rarest-label content: cases
    carrying the globally rarest labels are placed first, each into the
    split whose per-label quota deficit they cover best (weighted by
    inverse label frequency).  A repair pass then swaps cases so that every
    label with >= 3 gold spans corpus-wide reaches all three splits; when
    that is impossible an InfeasibleStratification warning is emitted and
    the best-effort split is returned.  Sizes follow largest-remainder
    apportionment of the ratios and are identical across runs for one seed.
    """
    if not cases:
        raise EmptyCorpus("no cases to split")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be three non-negatives summing to 1, got {ratios!r}")
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise CorpusError("duplicate case ids")

    sizes = apportion(len(cases), ratios)
    labels = {c.case_id: _case_labels(c) for c in cases}
    global_counts: Counter = Counter()
    carriers: dict = defaultdict(set)
    for cid, lab in labels.items():
        global_counts.update(lab)
        for l in lab:
            carriers[l].add(cid)

    needed = {l for l, n in global_counts.items() if n >= 3}
    for l in needed:
        if len(carriers[l]) < 3:
            warnings.warn(f"label {l} has {global_counts[l]} spans in only "
                          f"{len(carriers[l])} case(s); cannot reach every split",
                          InfeasibleStratification)

    rng = Random(seed)
    tiebreak = {cid: rng.random() for cid in sorted(labels)}
    def rarity(cid: str) -> float:
        lab = labels[cid]
        return min((global_counts[l] for l in lab), default=float("inf"))
    order = sorted(labels, key=lambda cid: (rarity(cid), tiebreak[cid]))

    quota = [{l: n * r for l, n in global_counts.items()} for r in ratios]
    remaining = list(sizes)
    assign: dict[str, int] = {}
    for cid in order:
        lab = labels[cid]
        best, best_score = None, None
        for s in range(3):
            if remaining[s] == 0:
                continue
            # remaining quota can go negative, which penalizes overshoot
            score = sum(cnt * quota[s].get(l, 0.0) / max(global_counts[l], 1)
                        for l, cnt in lab.items())
            key = (score, remaining[s] / max(sizes[s], 1), -s)
            if best_score is None or key > best_score:
                best, best_score = s, key
        assign[cid] = best
        remaining[best] -= 1
        for l, cnt in lab.items():
            quota[best][l] = quota[best].get(l, 0.0) - cnt

    _repair_coverage(assign, labels, needed, carriers)

    members: list[list[str]] = [[], [], []]
    for cid in sorted(assign):
        members[assign[cid]].append(cid)
    return CorpusSplit(tuple(members[0]), tuple(members[1]), tuple(members[2]))


def _repair_coverage(assign: dict[str, int], labels: Mapping[str, Counter],
                     needed: set, carriers: Mapping) -> None:
    """Swap cases between splits until every needed label is in all splits.

    A swap is taken only if it opens no new hole: after the exchange every
    needed label must keep a positive count in both affected splits.
    """
    if not needed:
        return
    for _ in range(4 * len(needed) + 8):
        per = [Counter(), Counter(), Counter()]
        for cid, s in assign.items():
            for l, cnt in labels[cid].items():
                per[s][l] += cnt
        missing = [(l, s) for l in sorted(needed) for s in range(3) if per[s][l] == 0]
        if not missing:
            return
        l, s_to = missing[0]
        swapped = False
        for donor in sorted(carriers[l]):
            s_from = assign[donor]
            if s_from == s_to:
                continue
            for counter in sorted(c for c, s in assign.items() if s == s_to):
                ok = True
                for x in needed:
                    dn, cn = labels[donor][x], labels[counter][x]
                    if dn == 0 and cn == 0:
                        continue
                    if per[s_to][x] - cn + dn <= 0 or per[s_from][x] - dn + cn <= 0:
                        ok = False
                        break
                if ok:
                    assign[donor], assign[counter] = s_to, s_from
                    swapped = True
                    break
            if swapped:
                break
        if not swapped:
            warnings.warn(f"could not place label {l} into every split",
                          InfeasibleStratification)
            return


# ---------------------------------------------------------------------------
# JSON interchange

def _span_to_dict(s: ArgumentSpan, with_annotator: bool) -> dict:
    d = {"paragraph_id": s.paragraph_id, "tok_start": s.tok_start, "tok_end": s.tok_end,
         "arg_type": None if s.arg_type is None else s.arg_type.value,
         "actor": None if s.actor is None else s.actor.value}
    if with_annotator and s.annotator_id is not None:
        d["annotator_id"] = s.annotator_id
    return d


def _span_from_dict(d: Mapping) -> ArgumentSpan:
    return ArgumentSpan(
        paragraph_id=str(d["paragraph_id"]), tok_start=int(d["tok_start"]),
        tok_end=int(d["tok_end"]),
        arg_type=None if d.get("arg_type") is None else ArgType(d["arg_type"]),
        actor=None if d.get("actor") is None else Actor(d["actor"]),
        annotator_id=d.get("annotator_id"))


def case_to_dict(case: AnnotatedCase) -> dict:
    layers = []
    for ann in sorted(case.raw_annotator_layers):
        for s in case.raw_annotator_layers[ann]:
            d = _span_to_dict(s, with_annotator=True)
            d["annotator_id"] = ann
            layers.append(d)
    return {
        "case_id": case.case_id,
        "article": case.article,
        "importance": None if case.importance is None else int(case.importance),
        "paragraphs": [
            {"id": p.id, "text": p.text,
             "tokens": [{"start": t.char_start, "end": t.char_end} for t in p.tokens],
             "in_law_section": p.in_law_section}
            for p in case.paragraphs],
        "gold_spans": [_span_to_dict(s, with_annotator=False) for s in case.gold_spans],
        "annotator_layers": layers,
    }


def case_from_dict(d: Mapping) -> AnnotatedCase:
    paragraphs = []
    for pd in d["paragraphs"]:
        raw = pd["text"].encode("utf-8")
        toks = tuple(
            Token(raw[td["start"]:td["end"]].decode("utf-8"), int(td["start"]), int(td["end"]))
            for td in pd["tokens"])
        paragraphs.append(Paragraph(str(pd["id"]), pd["text"], toks,
                                    bool(pd.get("in_law_section", False))))
    layers: dict[str, list[ArgumentSpan]] = defaultdict(list)
    for sd in d.get("annotator_layers", ()):  # layers are optional
        s = _span_from_dict(sd)
        layers[str(sd.get("annotator_id", "unknown"))].append(s)
    return AnnotatedCase(
        case_id=str(d["case_id"]),
        article=None if d.get("article") is None else int(d["article"]),
        importance=None if d.get("importance") is None else ImportanceLevel(int(d["importance"])),
        paragraphs=tuple(paragraphs),
        gold_spans=tuple(_span_from_dict(sd) for sd in d.get("gold_spans", ())),
        raw_annotator_layers={a: tuple(v) for a, v in layers.items()})


def save_case(case: AnnotatedCase, path: Path | str) -> None:
    Path(path).write_text(json.dumps(case_to_dict(case), ensure_ascii=False, indent=1),
                          encoding="utf-8")


def load_case(path: Path | str) -> AnnotatedCase:
    return case_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_corpus(directory: Path | str, min_spans: int = MIN_GOLD_SPANS,
                strict: bool = False) -> list[AnnotatedCase]:
    """Load every ``*.json`` case under `directory`, sorted by case id.

    Cases with fewer than `min_spans` gold spans are rejected with a
    warning (pass ``min_spans=0`` to keep them).  With ``strict`` any
    validation violation raises CorpusError.
    """
    directory = Path(directory)
    cases = []
    for path in sorted(directory.glob("*.json")):
        case = load_case(path)
        if len(case.gold_spans) < min_spans:
            warnings.warn(f"{case.case_id}: only {len(case.gold_spans)} gold spans, dropped")
            continue
        if strict:
            report = validate_case(case)
            if not report.ok:
                raise CorpusError(f"{case.case_id}: {report.violations[0].message}")
        cases.append(case)
    cases.sort(key=lambda c: c.case_id)
    return cases


def split_to_dict(split: CorpusSplit) -> dict:
    return {"train": list(split.train), "dev": list(split.dev), "test": list(split.test)}


def split_from_dict(d: Mapping) -> CorpusSplit:
    return CorpusSplit(tuple(d["train"]), tuple(d["dev"]), tuple(d["test"]))


def save_split(split: CorpusSplit, path: Path | str, meta: Optional[Mapping] = None) -> None:
    d = split_to_dict(split)
    if meta:
        d["_meta"] = dict(meta)
    Path(path).write_text(json.dumps(d, indent=1), encoding="utf-8")


def load_split(path: Path | str) -> CorpusSplit:
    return split_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
