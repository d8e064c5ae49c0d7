"""Unitized agreement over a token continuum (Krippendorff's alpha-u family).

Each annotator partitions the continuum into labeled units and gaps.  Per
category c the distance between two intersecting sections of different
annotators is

    both c-units:                 (start difference)^2 + (end difference)^2
    c-unit inside the other's gap: (unit length)^2
    anything else:                 0

Observed disagreement sums these over all annotator pairs and section
pairs, normalized per ordered pair per continuum position:
Do(c) = 2 * S / (m (m-1) L).

Expected disagreement is the exact expectation of the same statistic under
the chance model "every unit keeps its length but lands independently and
uniformly at random on the continuum" (discrete offsets, per-annotator
unit multisets preserved, gaps recomputed as the complement).  The overall
coefficient pools categories: alpha = 1 - sum_c Do(c) / sum_c De(c), so
alpha is exactly 1 when observed disagreement is zero, near 0 for random
unitizations and negative for systematic disagreement.  The model
identifier travels in every score so downstream artifacts can state which
variant produced them.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import AnnotatedCase, CorpusError

METHOD = "unitized-alpha/uniform-placement-v1"


class TooFewAnnotators(CorpusError):
    pass


class EmptyContinuum(CorpusError):
    pass


@dataclass(frozen=True)
class Unit:
    start: int
    end: int
    label: str

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Continuum:
    """A continuum of `length` positions with one unit layer per annotator."""

    length: int
    layers: Mapping[str, tuple[Unit, ...]]

    def __post_init__(self):
        for ann, units in self.layers.items():
            prev_end = None
            for u in sorted(units, key=lambda u: (u.start, u.end)):
                if not (0 <= u.start < u.end <= self.length):
                    raise ValueError(f"{ann}: unit [{u.start},{u.end}) outside continuum")
                if prev_end is not None and u.start < prev_end:
                    raise ValueError(f"{ann}: units overlap at {u.start}")
                prev_end = u.end


@dataclass(frozen=True)
class AgreementScore:
    alpha: float
    observed: float
    expected: float
    by_category: Mapping[str, tuple[float, float]]  # label -> (Do, De)
    n_annotators: int
    length: int
    method: str = METHOD


def _euu(a: int, b: int, length: int) -> float:
    """E[squared start/end differences over intersecting placements].

    Both units placed independently and uniformly over their valid discrete
    offsets on a continuum of `length`.
    """
    na, nb = length - a + 1, length - b + 1
    d = np.arange(-(nb - 1), na)
    cnt = np.minimum(na - 1, nb - 1 + d) - np.maximum(0, d) + 1
    overlap = (d > -a) & (d < b)
    delta = d.astype(float) ** 2 + (d + a - b).astype(float) ** 2
    return float((cnt * overlap * delta).sum() / (na * nb))


def _pmiss(a: int, others: Sequence[int], length: int) -> float:
    """P[a placed unit of length `a` hits none of the other layer's units]."""
    na = length - a + 1
    s = np.arange(na)
    prob = np.ones(na)
    for b in others:
        nb = length - b + 1
        lo = np.maximum(0, s - b + 1)
        hi = np.minimum(nb - 1, s + a - 1)
        hit = np.clip(hi - lo + 1, 0, None)
        prob = prob * (nb - hit) / nb
    return float(prob.mean())


def _pair_observed(ui: Sequence[Unit], uj: Sequence[Unit]) -> float:
    s = 0.0
    for g in ui:
        hit = False
        for h in uj:
            if g.start < h.end and h.start < g.end:
                hit = True
                s += float(g.start - h.start) ** 2 + float(g.end - h.end) ** 2
        if not hit:
            s += float(g.length) ** 2
    for h in uj:
        if not any(g.start < h.end and h.start < g.end for g in ui):
            s += float(h.length) ** 2
    return s


def _pair_expected(ui: Sequence[Unit], uj: Sequence[Unit], length: int) -> float:
    s = 0.0
    lens_j = [h.length for h in uj]
    lens_i = [g.length for g in ui]
    for g in ui:
        for h in uj:
            s += _euu(g.length, h.length, length)
        s += float(g.length) ** 2 * _pmiss(g.length, lens_j, length)
    for h in uj:
        s += float(h.length) ** 2 * _pmiss(h.length, lens_i, length)
    return s


def unitized_alpha(continuum: Continuum) -> AgreementScore:
    """Chance-corrected unitizing agreement across all annotators jointly."""
    m = len(continuum.layers)
    if m < 2:
        raise TooFewAnnotators(f"{m} annotator layer(s), need at least 2")
    if continuum.length <= 0:
        raise EmptyContinuum("continuum has no positions")

    annotators = sorted(continuum.layers)
    categories = sorted({u.label for units in continuum.layers.values() for u in units})
    norm = m * (m - 1) * continuum.length
    by_cat: dict[str, tuple[float, float]] = {}
    total_do = total_de = 0.0
    for cat in categories:
        per = {a: tuple(sorted((u for u in continuum.layers[a] if u.label == cat),
                               key=lambda u: u.start))
               for a in annotators}
        s_obs = s_exp = 0.0
        for x in range(m):
            for y in range(x + 1, m):
                s_obs += _pair_observed(per[annotators[x]], per[annotators[y]])
                s_exp += _pair_expected(per[annotators[x]], per[annotators[y]],
                                        continuum.length)
        do, de = 2.0 * s_obs / norm, 2.0 * s_exp / norm
        by_cat[cat] = (do, de)
        total_do += do
        total_de += de
    if total_do == 0.0:
        alpha = 1.0
    elif total_de == 0.0:
        alpha = float("nan")
    else:
        alpha = 1.0 - total_do / total_de
    return AgreementScore(alpha, total_do, total_de, by_cat, m, continuum.length)


def pairwise_alpha(continuum: Continuum) -> dict[tuple[str, str], AgreementScore]:
    """alpha-u for every annotator pair, alongside the joint score."""
    annotators = sorted(continuum.layers)
    out = {}
    for i, a in enumerate(annotators):
        for b in annotators[i + 1:]:
            sub = Continuum(continuum.length, {a: continuum.layers[a],
                                               b: continuum.layers[b]})
            out[(a, b)] = unitized_alpha(sub)
    return out


# ---------------------------------------------------------------------------
# case plumbing

def continuum_from_case(case: AnnotatedCase, dimension: str,
                        law_only: bool = True) -> Continuum:
    """Concatenate (law-section) paragraphs into one token continuum.

    Unit labels come from the requested dimension of each annotator span;
    spans lacking that label are skipped.
    """
    paragraphs = case.law_paragraphs() if law_only else case.paragraphs
    if law_only and not paragraphs:
        paragraphs = case.paragraphs  # untrimmed corpora fall back to all text
    base: dict[str, int] = {}
    pos = 0
    for p in paragraphs:
        base[p.id] = pos
        pos += len(p)
    layers: dict[str, tuple[Unit, ...]] = {}
    for ann, spans in case.raw_annotator_layers.items():
        units = []
        for s in spans:
            if s.paragraph_id not in base:
                continue
            member = s.arg_type if dimension == "arg" else s.actor
            if member is None:
                continue
            off = base[s.paragraph_id]
            units.append(Unit(off + s.tok_start, off + s.tok_end, member.value))
        layers[ann] = tuple(sorted(units, key=lambda u: (u.start, u.end)))
    return Continuum(pos, layers)


@dataclass(frozen=True)
class BatchRow:
    batch: str
    dimension: str
    n_cases: int
    n_skipped: int
    mean_alpha: Optional[float]


def batch_report(cases: Sequence[AnnotatedCase], batches: Mapping[str, Sequence[str]],
                 dimensions: Sequence[str] = ("arg", "actor")) -> list[BatchRow]:
    """Mean joint alpha-u per batch and dimension.

    Cases without at least two annotator layers are counted as skipped
    rather than failing the whole batch.
    """
    by_id = {c.case_id: c for c in cases}
    rows = []
    for batch in sorted(batches):
        ids = [i for i in batches[batch] if i in by_id]
        for dim in dimensions:
            scores, skipped = [], 0
            for cid in ids:
                try:
                    scores.append(unitized_alpha(continuum_from_case(by_id[cid], dim)).alpha)
                except (TooFewAnnotators, EmptyContinuum):
                    skipped += 1
            mean = sum(scores) / len(scores) if scores else None
            rows.append(BatchRow(batch, dim, len(scores), skipped, mean))
    return rows


def render_batch_rows(rows: Sequence[BatchRow]) -> list[str]:
    out = ["batch\tdimension\tn_cases\tn_skipped\tmean_alpha"]
    for r in rows:
        mean = "n/a" if r.mean_alpha is None else f"{r.mean_alpha:.4f}"
        out.append(f"{r.batch}\t{r.dimension}\t{r.n_cases}\t{r.n_skipped}\t{mean}")
    return out
