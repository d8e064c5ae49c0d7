"""Token-level scoring of BIO label sequences.

Precision/recall/F1 per label with macro averaging, row-normalized
confusion matrices, and transfer reports that compare two metric tables
with the integer-percent difference convention
round((new - original) / original * 100).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import CorpusError


class LengthMismatch(CorpusError):
    pass


def _flatten(gold, pred) -> tuple[list[str], list[str]]:
    gold = [list(getattr(s, "labels", s)) for s in gold]
    pred = [list(getattr(s, "labels", s)) for s in pred]
    if len(gold) != len(pred):
        raise LengthMismatch(f"{len(gold)} gold sequences vs {len(pred)} predicted")
    flat_g, flat_p = [], []
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise LengthMismatch(f"sequence {i}: {len(g)} gold labels vs {len(p)} predicted")
        flat_g.extend(g)
        flat_p.extend(p)
    return flat_g, flat_p


@dataclass(frozen=True)
class LabelMetrics:
    label: str
    frequency: int
    tp: int
    fp: int
    fn: int
    precision: float  # percent, unrounded
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsTable:
    dimension: str
    rows: tuple[LabelMetrics, ...]  # decreasing gold frequency, then label
    macro_precision: float
    macro_recall: float
    macro_f1: float
    total_tokens: int

    def row(self, label: str) -> Optional[LabelMetrics]:
        for r in self.rows:
            if r.label == label:
                return r
        return None


def token_prf(gold, pred, dimension: str = "arg",
              labels: Optional[Sequence[str]] = None) -> MetricsTable:
    """Per-label precision/recall/F1 over aligned label sequences.

    `labels` fixes the evaluation universe; by default it is every label
    seen in gold or predictions (O included).  F1 is 0 where P + R is 0.
    Values are percentages at full float precision; round only at the
    rendering edge.
    """
    g, p = _flatten(gold, pred)
    universe = list(labels) if labels is not None else sorted(set(g) | set(p))
    rows = []
    for lab in universe:
        tp = sum(1 for a, b in zip(g, p) if a == lab and b == lab)
        fp = sum(1 for a, b in zip(g, p) if a != lab and b == lab)
        fn = sum(1 for a, b in zip(g, p) if a == lab and b != lab)
        prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows.append(LabelMetrics(lab, tp + fn, tp, fp, fn, prec, rec, f1))
    rows.sort(key=lambda r: (-r.frequency, r.label))
    n = max(len(rows), 1)
    return MetricsTable(
        dimension, tuple(rows),
        macro_precision=sum(r.precision for r in rows) / n,
        macro_recall=sum(r.recall for r in rows) / n,
        macro_f1=sum(r.f1 for r in rows) / n,
        total_tokens=len(g))


def metrics_to_dict(t: MetricsTable) -> dict:
    return {
        "dimension": t.dimension,
        "total_tokens": t.total_tokens,
        "macro": {"precision": t.macro_precision, "recall": t.macro_recall,
                  "f1": t.macro_f1},
        "labels": [
            {"label": r.label, "frequency": r.frequency, "tp": r.tp, "fp": r.fp,
             "fn": r.fn, "precision": r.precision, "recall": r.recall, "f1": r.f1}
            for r in t.rows],
    }


def metrics_from_dict(d: Mapping) -> MetricsTable:
    rows = tuple(LabelMetrics(r["label"], int(r["frequency"]), int(r["tp"]),
                              int(r["fp"]), int(r["fn"]), float(r["precision"]),
                              float(r["recall"]), float(r["f1"]))
                 for r in d["labels"])
    return MetricsTable(d["dimension"], rows, float(d["macro"]["precision"]),
                        float(d["macro"]["recall"]), float(d["macro"]["f1"]),
                        int(d["total_tokens"]))


def save_metrics(t: MetricsTable, path: Path | str, meta: Optional[Mapping] = None) -> None:
    d = metrics_to_dict(t)
    if meta:
        d["_meta"] = dict(meta)
    Path(path).write_text(json.dumps(d, indent=1), encoding="utf-8")


def load_metrics(path: Path | str) -> MetricsTable:
    return metrics_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def render_metrics_rows(t: MetricsTable) -> list[str]:
    """TSV lines: label, frequency, P, R, F1 (two decimals), macro last."""
    out = ["label\tfrequency\tprecision\trecall\tf1"]
    for r in t.rows:
        out.append(f"{r.label}\t{r.frequency}\t{r.precision:.2f}\t{r.recall:.2f}\t{r.f1:.2f}")
    out.append(f"Macro\t{t.total_tokens}\t{t.macro_precision:.2f}"
               f"\t{t.macro_recall:.2f}\t{t.macro_f1:.2f}")
    return out


# ---------------------------------------------------------------------------
# confusion

@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    labels: tuple[str, ...]  # decreasing gold frequency, then label
    counts: np.ndarray       # counts[i, j] = gold labels[i] predicted as labels[j]

    def gold_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def pred_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def normalized(self) -> tuple[tuple[str, ...], np.ndarray]:
        """Row-normalized matrix; rows with zero gold support are omitted."""
        totals = self.gold_totals()
        keep = totals > 0
        mat = self.counts[keep].astype(float) / totals[keep, None]
        return tuple(l for l, k in zip(self.labels, keep) if k), mat


def confusion(gold, pred, label_order: Optional[Sequence[str]] = None) -> ConfusionMatrix:
    g, p = _flatten(gold, pred)
    if label_order is None:
        freq: dict[str, int] = {}
        for a in g:
            freq[a] = freq.get(a, 0) + 1
        labels = sorted(set(g) | set(p), key=lambda l: (-freq.get(l, 0), l))
    else:
        labels = list(label_order)
        unknown = (set(g) | set(p)) - set(labels)
        if unknown:
            raise LengthMismatch(f"labels outside the given order: {sorted(unknown)}")
    index = {l: i for i, l in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for a, b in zip(g, p):
        counts[index[a], index[b]] += 1
    return ConfusionMatrix(tuple(labels), counts)


# ---------------------------------------------------------------------------
# transfer

def transfer_diff(original_f1: float, new_f1: float) -> Optional[int]:
    """Integer percent change; 0 when both zero, None when undefined."""
    if original_f1 == 0.0:
        return 0 if new_f1 == 0.0 else None
    return round((new_f1 - original_f1) / original_f1 * 100)


@dataclass(frozen=True)
class TransferRow:
    label: str
    frequency: int       # gold tokens in the new evaluation set
    original_f1: float
    new_f1: float
    diff: Optional[int]


@dataclass(frozen=True)
class TransferReport:
    rows: tuple[TransferRow, ...]
    macro: TransferRow


def transfer_report(original: MetricsTable, new: MetricsTable) -> TransferReport:
    """Compare per-label F1 across evaluation sets.

    Rows cover the original table's label set, sorted by frequency on the
    new set (then label).  Labels absent from the new gold set keep zero
    frequency and F1 0; the new table's macro already excludes them when it
    was computed over its own observed universe.
    """
    rows = []
    for r in original.rows:
        nr = new.row(r.label)
        freq = nr.frequency if nr is not None else 0
        new_f1 = nr.f1 if nr is not None else 0.0
        rows.append(TransferRow(r.label, freq, r.f1, new_f1,
                                transfer_diff(r.f1, new_f1)))
    rows.sort(key=lambda r: (-r.frequency, r.label))
    macro = TransferRow("Macro", new.total_tokens, original.macro_f1, new.macro_f1,
                        transfer_diff(original.macro_f1, new.macro_f1))
    return TransferReport(tuple(rows), macro)


def render_transfer_rows(rep: TransferReport) -> list[str]:
    out = ["label\tfrequency\toriginal_f1\tnew_f1\tdiff_pct"]
    for r in rep.rows + (rep.macro,):
        diff = "n/a" if r.diff is None else str(r.diff)
        out.append(f"{r.label}\t{r.frequency}\t{r.original_f1:.2f}\t{r.new_f1:.2f}\t{diff}")
    return out
