"""Case-importance prediction from argument-derived features.

A case is summarized as 26 features (document-scale counts plus the
type and actor composition of its arguments) and importance levels 1-4
are predicted with a linear one-vs-rest maximum-margin classifier,
optimized in the primal (hinge loss + L2 with strength 1/C) by plain
full-batch subgradient descent on a fixed schedule.  Everything is
deterministic for a given seed.

The module also exposes the two companion analyses: signed feature
weights for a binary level-vs-level fit, and per-level feature means.
"""
from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .corpus import Actor, AnnotatedCase, ArgType, CorpusError

N_FEATURES = 26

FEATURE_NAMES: Tuple[str, ...] = (
    "doc_length",
    "shortened_doc_length",
    "num_arguments",
    "avg_argument_length",
    "fraction_argumentative",
    "shortened_fraction_argumentative",
) + tuple(f"fraction_argtype:{t.short}" for t in ArgType) \
  + tuple(f"fraction_actor:{a.short}" for a in Actor)


class NoArguments(CorpusError):
    pass


class DegenerateClass(CorpusError):
    pass


# ---------------------------------------------------------------------------
# feature extraction

@dataclass(frozen=True)
class FeatureVector:
    doc_length: float
    shortened_doc_length: float
    num_arguments: float
    avg_argument_length: float
    fraction_argumentative: float
    shortened_fraction_argumentative: float
    fraction_argtype: Tuple[float, ...]
    fraction_actor: Tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array((self.doc_length, self.shortened_doc_length,
                         self.num_arguments, self.avg_argument_length,
                         self.fraction_argumentative,
                         self.shortened_fraction_argumentative)
                        + self.fraction_argtype + self.fraction_actor)


def extract_features(case: AnnotatedCase) -> FeatureVector:
    """Per-case features; shortened quantities use the law section only.

    A case without a marked law section falls back to the whole document
    for the shortened quantities.  Raises NoArguments when the case has
    no gold spans (the composition fractions are undefined).
    """
    if not case.gold_spans:
        raise NoArguments(f"case {case.case_id} has no gold spans")
    law = [p for p in case.paragraphs if p.in_law_section] or list(case.paragraphs)
    law_ids = {p.id for p in law}
    doc_length = sum(len(p) for p in case.paragraphs)
    shortened = sum(len(p) for p in law)

    covered_all = 0
    covered_law = 0
    char_lengths = []
    type_counts = {t: 0 for t in ArgType}
    actor_counts = {a: 0 for a in Actor}
    by_par = {p.id: p for p in case.paragraphs}
    for span in case.gold_spans:
        n = span.tok_end - span.tok_start
        covered_all += n
        if span.paragraph_id in law_ids:
            covered_law += n
        par = by_par[span.paragraph_id]
        toks = par.tokens
        char_lengths.append(toks[span.tok_end - 1].char_end
                            - toks[span.tok_start].char_start)
        if span.arg_type is not None:
            type_counts[span.arg_type] += 1
        if span.actor is not None:
            actor_counts[span.actor] += 1

    n_args = len(case.gold_spans)
    return FeatureVector(
        float(doc_length),
        float(shortened),
        float(n_args),
        sum(char_lengths) / n_args,
        covered_all / doc_length if doc_length else 0.0,
        covered_law / shortened if shortened else 0.0,
        tuple(type_counts[t] / n_args for t in ArgType),
        tuple(actor_counts[a] / n_args for a in Actor),
    )


def corpus_features(cases: Sequence[AnnotatedCase]):
    """Feature matrix, labels and case ids; skips unusable cases with a warning."""
    rows, labels, ids, skipped = [], [], [], []
    for case in cases:
        if case.importance is None:
            warnings.warn(f"case {case.case_id}: no importance label, skipped")
            skipped.append(case.case_id)
            continue
        try:
            fv = extract_features(case)
        except NoArguments:
            warnings.warn(f"case {case.case_id}: no arguments, skipped")
            skipped.append(case.case_id)
            continue
        rows.append(fv.as_array())
        labels.append(int(case.importance))
        ids.append(case.case_id)
    X = np.stack(rows) if rows else np.zeros((0, N_FEATURES))
    return X, np.array(labels, dtype=np.int64), ids, skipped


# ---------------------------------------------------------------------------
# primal hinge fitting

def hinge_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray,
                    C: float) -> float:
    margins = y * (X @ w + b)
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    return float(hinge + (w @ w) / (2.0 * C))


def fit_binary_hinge(X: np.ndarray, y: np.ndarray, C: float,
                     epochs: int = 2000, lr0: float = 0.1, decay: float = 1.0,
                     record_objective: bool = False):
    """Full-batch subgradient descent on mean hinge + ||w||^2 / (2C).

    The 1/t step schedule trades a little convergence speed for descent
    that is monotone in practice; flatter schedules zigzag at the hinge
    kinks near the optimum.
    """
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    lam = 1.0 / C
    history: List[float] = []
    for t in range(epochs):
        if record_objective:
            history.append(hinge_objective(w, b, X, y, C))
        lr = lr0 / (1.0 + decay * t)
        margins = y * (X @ w + b)
        active = margins < 1.0
        gw = lam * w
        gb = 0.0
        if active.any():
            gw = gw - (y[active, None] * X[active]).sum(axis=0) / n
            gb = -float(y[active].sum()) / n
        w = w - lr * gw
        b = b - lr * gb
    if record_objective:
        history.append(hinge_objective(w, b, X, y, C))
        return w, b, history
    return w, b


def _standardize_fit(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return mean, std


# ---------------------------------------------------------------------------
# grid search and the fitted model

@dataclass(frozen=True)
class GridConfig:
    kernel: str = "linear"
    c_values: Tuple[float, ...] = (0.1, 1.0, 10.0, 100.0, 1000.0)
    folds: int = 5
    epochs: int = 2000

    def validate(self) -> None:
        if self.kernel != "linear":
            raise ValueError(f"unsupported kernel: {self.kernel!r}")
        if not self.c_values or any(c <= 0 for c in self.c_values):
            raise ValueError("C values must be positive")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass
class ImportanceModel:
    classes: Tuple[int, ...]
    weights: np.ndarray
    biases: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    chosen_c: float
    cv_scores: Dict[float, float]
    train_indices: Tuple[int, ...]
    holdout_indices: Tuple[int, ...]

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.mean) / self.std
        return Xs @ self.weights.T + self.biases

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, so ties fall to the lower level
        d = self.decision_values(X)
        return np.array([self.classes[i] for i in d.argmax(axis=1)])


def _fit_ovr(X: np.ndarray, y: np.ndarray, classes: Sequence[int], C: float,
             epochs: int):
    mean, std = _standardize_fit(X)
    Xs = (X - mean) / std
    W = np.zeros((len(classes), X.shape[1]))
    B = np.zeros(len(classes))
    for i, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        w, b = fit_binary_hinge(Xs, target, C, epochs=epochs)
        W[i] = w
        B[i] = b
    return W, B, mean, std


def _stratified_indices(y: np.ndarray, rng: random.Random) -> Dict[int, List[int]]:
    per: Dict[int, List[int]] = {}
    for i, label in enumerate(y):
        per.setdefault(int(label), []).append(i)
    for label in per:
        rng.shuffle(per[label])
    return per


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> List[List[int]]:
    """Deterministic stratified partition: every index lands in one fold."""
    rng = random.Random(f"{seed}:folds")
    out: List[List[int]] = [[] for _ in range(folds)]
    for label in sorted(set(int(v) for v in y)):
        idx = [i for i in range(len(y)) if int(y[i]) == label]
        rng.shuffle(idx)
        for k, i in enumerate(idx):
            out[k % folds].append(i)
    return [sorted(f) for f in out]


def macro_f1(gold: np.ndarray, pred: np.ndarray, classes: Sequence[int]) -> float:
    scores = []
    for cls in classes:
        tp = int(((gold == cls) & (pred == cls)).sum())
        fp = int(((gold != cls) & (pred == cls)).sum())
        fn = int(((gold == cls) & (pred != cls)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * p * r / (p + r) if p + r else 0.0)
    return sum(scores) / len(scores)


def grid_search_train(features, labels, grid: GridConfig = GridConfig(),
                      seed: int = 0) -> ImportanceModel:
    """Hold out a stratified 20%, pick C by 5-fold CV on the rest, refit.

    The holdout indices ride on the returned model so the caller can
    produce a test report on exactly the portion the search never saw.
    """
    grid.validate()
    X = np.stack([f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
                  for f in features])
    y = np.array([int(l) for l in labels], dtype=np.int64)
    if len(X) != len(y):
        raise ValueError("features and labels differ in length")
    classes = tuple(sorted(set(int(v) for v in y)))
    if len(classes) < 2:
        raise DegenerateClass("need at least two importance levels")

    rng = random.Random(f"{seed}:holdout")
    per = _stratified_indices(y, rng)
    holdout: List[int] = []
    for label in sorted(per):
        idx = per[label]
        n_test = round(0.2 * len(idx))
        if len(idx) >= 2 and n_test == 0:
            n_test = 1
        holdout.extend(idx[:n_test])
    holdout_set = set(holdout)
    train_idx = [i for i in range(len(y)) if i not in holdout_set]
    ytr = y[train_idx]
    Xtr = X[train_idx]
    for cls in classes:
        if not (ytr == cls).any():
            raise DegenerateClass(f"level {cls} absent from the training portion")

    folds = stratified_folds(ytr, grid.folds, seed)
    cv_scores: Dict[float, float] = {}
    for C in grid.c_values:
        fold_scores = []
        for k in range(grid.folds):
            val = folds[k]
            tr = [i for i in range(len(ytr)) if i not in set(val)]
            if not val or not tr:
                continue
            W, B, mean, std = _fit_ovr(Xtr[tr], ytr[tr], classes, C, grid.epochs)
            model = ImportanceModel(classes, W, B, mean, std, C, {}, (), ())
            pred = model.predict(Xtr[val])
            fold_scores.append(macro_f1(ytr[val], pred, classes))
        cv_scores[C] = sum(fold_scores) / len(fold_scores) if fold_scores else 0.0

    best_c = None
    best_score = -1.0
    for C in sorted(grid.c_values):
        if cv_scores[C] > best_score:
            best_c, best_score = C, cv_scores[C]

    W, B, mean, std = _fit_ovr(Xtr, ytr, classes, best_c, grid.epochs)
    return ImportanceModel(classes, W, B, mean, std, best_c, cv_scores,
                           tuple(train_idx), tuple(sorted(holdout)))


# ---------------------------------------------------------------------------
# reporting

@dataclass(frozen=True)
class ReportRow:
    level: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ImportanceReport:
    rows: Tuple[ReportRow, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    total_support: int


def classification_report(model: ImportanceModel, test_features,
                          test_labels) -> ImportanceReport:
    X = np.stack([f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
                  for f in test_features])
    gold = np.array([int(l) for l in test_labels], dtype=np.int64)
    pred = model.predict(X)
    rows = []
    for cls in model.classes:
        tp = int(((gold == cls) & (pred == cls)).sum())
        fp = int(((gold != cls) & (pred == cls)).sum())
        fn = int(((gold == cls) & (pred != cls)).sum())
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        rows.append(ReportRow(cls, p, r, f1, tp + fn))
    n = len(rows)
    return ImportanceReport(
        tuple(rows),
        sum(r.precision for r in rows) / n,
        sum(r.recall for r in rows) / n,
        sum(r.f1 for r in rows) / n,
        int(len(gold)))


def render_report_rows(report: ImportanceReport) -> List[str]:
    lines = ["level\tprecision\trecall\tf1\tsupport"]
    for r in report.rows:
        lines.append(f"{r.level}\t{r.precision:.2f}\t{r.recall:.2f}"
                     f"\t{r.f1:.2f}\t{r.support}")
    lines.append(f"macro\t{report.macro_precision:.2f}\t{report.macro_recall:.2f}"
                 f"\t{report.macro_f1:.2f}\t{report.total_support}")
    return lines


# ---------------------------------------------------------------------------
# companion analyses

@dataclass(frozen=True)
class RankedWeight:
    feature: str
    weight: float


def feature_importance(features, labels, class_a: int, class_b: int,
                       C: float = 10.0, epochs: int = 2000) -> List[RankedWeight]:
    """Binary fit on two levels; weights ranked by magnitude.

    Positive weight favors `class_a`.  Weights live on standardized
    features, so magnitudes are comparable across features.
    """
    X = np.stack([f.as_array() if isinstance(f, FeatureVector) else np.asarray(f, dtype=float)
                  for f in features])
    y = np.array([int(l) for l in labels], dtype=np.int64)
    sel = (y == class_a) | (y == class_b)
    if not (y == class_a).any() or not (y == class_b).any():
        raise DegenerateClass(f"levels {class_a} and {class_b} must both be present")
    Xab = X[sel]
    target = np.where(y[sel] == class_a, 1.0, -1.0)
    mean, std = _standardize_fit(Xab)
    w, _ = fit_binary_hinge((Xab - mean) / std, target, C, epochs=epochs)
    names = FEATURE_NAMES if X.shape[1] == N_FEATURES else tuple(
        f"f{i}" for i in range(X.shape[1]))
    ranked = sorted(range(len(w)), key=lambda i: (-abs(w[i]), i))
    return [RankedWeight(names[i], float(w[i])) for i in ranked]


@dataclass(frozen=True)
class AveragesTable:
    feature_names: Tuple[str, ...]
    levels: Tuple[int, ...]
    values: np.ndarray  # (n_features, n_levels)


def feature_averages(cases: Sequence[AnnotatedCase]) -> AveragesTable:
    """Mean of every feature per importance level, Table-style 26 x levels."""
    X, y, _, _ = corpus_features(cases)
    if len(X) == 0:
        raise DegenerateClass("no usable cases")
    levels = tuple(sorted(set(int(v) for v in y)))
    cols = [X[y == lvl].mean(axis=0) for lvl in levels]
    return AveragesTable(FEATURE_NAMES, levels, np.stack(cols, axis=1))


def render_averages_rows(table: AveragesTable) -> List[str]:
    header = "feature\t" + "\t".join(f"level_{l}" for l in table.levels)
    lines = [header]
    for i, name in enumerate(table.feature_names):
        vals = "\t".join(f"{table.values[i, j]:.2f}" for j in range(len(table.levels)))
        lines.append(f"{name}\t{vals}")
    return lines


# ---------------------------------------------------------------------------
# model serialization

MODEL_FORMAT = "importance-ovr/1"


def save_model(model: ImportanceModel, path,
               case_ids: Optional[Sequence[str]] = None) -> None:
    import json
    from pathlib import Path
    doc = {
        "format": MODEL_FORMAT,
        "classes": list(model.classes),
        "weights": model.weights.tolist(),
        "biases": model.biases.tolist(),
        "mean": model.mean.tolist(),
        "std": model.std.tolist(),
        "chosen_c": model.chosen_c,
        "cv_scores": {str(c): s for c, s in model.cv_scores.items()},
        "train_indices": list(model.train_indices),
        "holdout_indices": list(model.holdout_indices),
    }
    if case_ids is not None:
        doc["case_ids"] = list(case_ids)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path):
    import json
    from pathlib import Path
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format: {doc.get('format')!r}")
    model = ImportanceModel(
        tuple(doc["classes"]),
        np.array(doc["weights"]),
        np.array(doc["biases"]),
        np.array(doc["mean"]),
        np.array(doc["std"]),
        doc["chosen_c"],
        {float(c): s for c, s in doc["cv_scores"].items()},
        tuple(doc["train_indices"]),
        tuple(doc["holdout_indices"]),
    )
    return model, doc.get("case_ids")
