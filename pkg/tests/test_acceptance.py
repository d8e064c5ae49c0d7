"""Release gate: one test per shipping criterion.

Each test prints a single ``[criterion NN] PASS`` line on success so a
``pytest -v -s`` run reads as a checklist.  Criteria that depend on the
publicly released corpus are skipped with an explicit marker when
ARGMINE_RELEASED_CORPUS is not set; they never pass silently.
"""
import os
import time
import warnings
from random import Random

import numpy as np
import pytest

from argmine.agreement import unitized_alpha
from argmine.biocodec import (SubwordAlignment, decode_bio, encode_bio,
                              map_subword_predictions)
from argmine.corpus import (Actor, AnnotatedCase, ArgType, ArgumentSpan,
                            CorpusSplit, corpus_stats, load_corpus,
                            stratified_split)
from argmine.evaluation import confusion, token_prf, transfer_diff
from argmine.importance import (GridConfig, extract_features, feature_averages,
                                grid_search_train, macro_f1, stratified_folds)
from argmine.tagger import TaggerConfig, init_params, loss_and_grads, predict, train
from conftest import make_corpus, make_paragraph
from test_agreement import oracle_alpha, random_continuum
from test_importance import separable_features
from test_tagger import _template_case

RELEASED = os.environ.get("ARGMINE_RELEASED_CORPUS")


def ok(n, msg):
    print(f"\n[criterion {n:02d}] PASS  {msg}")


def skip(n, msg):
    print(f"\n[criterion {n:02d}] SKIP  {msg}")
    pytest.skip(f"criterion {n:02d}: {msg}")


# ---------------------------------------------------------------------------
# 1. BIO round-trip at volume

def _random_fixture(rng, dimension):
    n = rng.randint(1, 25)
    par = make_paragraph("p", [f"w{i}" for i in range(n)])
    members = list(ArgType) if dimension == "arg" else list(Actor)
    spans, i = [], 0
    while i < n:
        if rng.random() < 0.4:
            end = min(n, i + rng.randint(1, 4))
            kw = ({"arg_type": rng.choice(members)} if dimension == "arg"
                  else {"actor": rng.choice(members)})
            spans.append(ArgumentSpan("p", i, end, **kw))
            i = end + rng.randint(0, 2)
        else:
            i += 1
    return par, spans


def test_c01_bio_roundtrip_10k_per_dimension():
    rng = Random(11)
    start = time.monotonic()
    for dimension in ("arg", "actor"):
        for _ in range(10_000):
            par, spans = _random_fixture(rng, dimension)
            seq = encode_bio(par, spans, dimension)
            back = decode_bio(seq)
            want = [(s.tok_start, s.tok_end,
                     s.arg_type if dimension == "arg" else s.actor)
                    for s in spans]
            got = [(s.tok_start, s.tok_end,
                    s.arg_type if dimension == "arg" else s.actor)
                   for s in back]
            assert got == want
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"round-trip volume run took {elapsed:.1f}s"
    ok(1, f"20,000 random span sets round-trip exactly in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. dual-column encoding of the worked figure

FIG_WORDS = ["22", ".", "In", "the", "applicants", "'", "submission", ",",
             "the", "refusal", "to", "grant", "home", "country", "."]


def test_c02_figure_example_exact_columns():
    par = make_paragraph("22", FIG_WORDS)
    span = ArgumentSpan("22", 2, 15, ArgType.ApplicationCase, Actor.Applicant)
    arg = encode_bio(par, [span], "arg").labels
    actor = encode_bio(par, [span], "actor").labels
    assert list(arg) == (["O", "O", "B-Application case"]
                         + ["I-Application case"] * 12)
    assert list(actor) == ["O", "O", "B-Applicant"] + ["I-Applicant"] * 12
    ok(2, "figure paragraph encodes to the published dual label columns")


# ---------------------------------------------------------------------------
# 3. subword mapping row

def test_c03_subword_mapping_row():
    pieces = ["I-Sub", "-100", "-100", "I-Sub", "I-Sub", "I-Sub",
              "I-Sub", "-100", "-100"]
    alignment = SubwordAlignment((3, 1, 1, 1, 3))
    assert map_subword_predictions(pieces, alignment) == ["I-Sub"] * 5
    ok(3, "piece predictions collapse to the published token row")


# ---------------------------------------------------------------------------
# 4. agreement exactness and oracle match

def test_c04_agreement_identity_and_oracle():
    start = time.monotonic()
    rng = Random(23)
    for _ in range(20):
        cont = random_continuum(rng)
        layer = next(iter(cont.layers.values()))
        twin = type(cont)(cont.length, {"a": layer, "b": tuple(layer)})
        score = unitized_alpha(twin)
        assert abs(score.alpha - 1.0) <= 1e-9

    checked = 0
    while checked < 50:
        cont = random_continuum(rng)
        if len(cont.layers) < 2:
            continue
        mine = unitized_alpha(cont).alpha
        ref = oracle_alpha(cont)[0]
        if np.isnan(ref):
            assert np.isnan(mine)
        else:
            assert abs(mine - ref) <= 1e-6
        checked += 1
    elapsed = time.monotonic() - start
    assert elapsed < 5.0, f"agreement suite took {elapsed:.1f}s"
    ok(4, f"identity alpha exact, 50 continua match the oracle in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 5. metrics against brute-force counting

def _brute_prf(gold, pred, universe):
    rows = {}
    for lab in universe:
        tp = fp = fn = 0
        for g_seq, p_seq in zip(gold, pred):
            for g, p in zip(g_seq, p_seq):
                tp += g == lab and p == lab
                fp += g != lab and p == lab
                fn += g == lab and p != lab
        prec = 100.0 * tp / (tp + fp) if tp + fp else 0.0
        rec = 100.0 * tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        rows[lab] = (prec, rec, f1)
    return rows


def test_c05_metrics_oracle_and_published_aggregates():
    rng = Random(37)
    labels = ["O", "B-X", "I-X", "B-Y", "I-Y"]
    for _ in range(100):
        gold = [[rng.choice(labels) for _ in range(rng.randint(1, 12))]
                for _ in range(rng.randint(1, 6))]
        pred = [[rng.choice(labels) for _ in row] for row in gold]
        table = token_prf(gold, pred)
        universe = sorted({l for row in gold + pred for l in row})
        ref = _brute_prf(gold, pred, universe)
        assert {r.label for r in table.rows} == set(universe)
        for r in table.rows:
            bp, br, bf = ref[r.label]
            assert abs(r.precision - bp) <= 1e-12
            assert abs(r.recall - br) <= 1e-12
            assert abs(r.f1 - bf) <= 1e-12
        assert abs(table.macro_f1
                   - sum(v[2] for v in ref.values()) / len(ref)) <= 1e-9

    assert round(sum((0.25, 0.40, 0.20, 0.67)) / 4, 2) == 0.38

    gold = np.array([1] * 13 + [2] * 14 + [3] * 16 + [4] * 32)
    majority = macro_f1(gold, np.full(len(gold), 4), (1, 2, 3, 4))
    assert abs(majority - 0.15) <= 0.005
    ok(5, "token metrics match brute force; published aggregates reproduced")


# ---------------------------------------------------------------------------
# 6. confusion matrix conservation

def test_c06_confusion_row_and_column_sums():
    rng = Random(41)
    labels = ["O", "B-X", "I-X", "B-Y"]
    gold = [[rng.choice(labels) for _ in range(rng.randint(1, 15))]
            for _ in range(8)]
    pred = [[rng.choice(labels) for _ in row] for row in gold]
    cm = confusion(gold, pred)
    flat_g = [l for row in gold for l in row]
    flat_p = [l for row in pred for l in row]
    counts = np.asarray(cm.counts)
    for i, lab in enumerate(cm.labels):
        assert counts[i].sum() == flat_g.count(lab)
        assert counts[:, i].sum() == flat_p.count(lab)
    kept, norm = cm.normalized()
    assert np.allclose(np.asarray(norm).sum(axis=1), 1.0, atol=1e-9)
    assert set(kept) == {l for l in cm.labels if flat_g.count(l)}
    ok(6, "confusion rows/columns conserve counts; normalized rows sum to 1")


# ---------------------------------------------------------------------------
# 7. released-corpus tallies (conditional)

def test_c07_released_corpus_span_and_tag_counts():
    if not RELEASED:
        skip(7, "released corpus absent (set ARGMINE_RELEASED_CORPUS)")
    cases = load_corpus(RELEASED, min_spans=0)
    stats = corpus_stats(cases)
    arg = {label: count for label, count, _ in stats.rows("arg_spans")}
    actor = {label: count for label, count, _ in stats.rows("actor_spans")}
    assert arg["Application case"] == 8688
    assert arg["Precedents ECHR"] == 2015
    assert actor["ECHR"] == 9950
    tags = {label: count for label, count, _ in stats.rows("arg_tags")}
    actor_tags = {label: count for label, count, _ in stats.rows("actor_tags")}
    assert tags["B-Application case"] == 8688
    assert tags["I-Application case"] == 820866
    assert tags["O"] == 867913
    assert actor_tags["B-ECHR"] == 9950
    assert actor_tags["I-ECHR"] == 1053629
    ok(7, "released-corpus span and tag tallies match the published tables")


# ---------------------------------------------------------------------------
# 8. tagger overfit, gradients, determinism

@pytest.fixture(scope="module")
def overfit():
    cases = [_template_case(f"c{i}") for i in range(5)]
    assert sum(len(c.paragraphs) for c in cases) == 20
    split = CorpusSplit(tuple(c.case_id for c in cases), ("c0",), ("c1",))
    config = TaggerConfig(embedding_dim=24, hidden_dim=32, epochs=150,
                          learning_rate=0.015, batch_size=8, warmup_steps=30,
                          seed=1)
    start = time.monotonic()
    ckpt = train(split, cases, config)
    elapsed = time.monotonic() - start
    return cases, split, ckpt, elapsed


def test_c08_tagger_overfit_gradient_determinism(overfit):
    cases, split, ckpt, elapsed = overfit
    assert elapsed < 120.0, f"overfit training took {elapsed:.1f}s"
    for head_idx in (0, 1):
        correct = total = 0
        for case in cases:
            for par, pair in zip(case.paragraphs, predict(ckpt, case)):
                gold = encode_bio(par, [s for s in case.gold_spans
                                        if s.paragraph_id == par.id],
                                  "arg" if head_idx == 0 else "actor").labels
                got = pair[head_idx].labels
                correct += sum(a == b for a, b in zip(gold, got))
                total += len(gold)
        assert correct / total >= 0.99

    config = TaggerConfig(embedding_dim=6, hidden_dim=8, seed=0)
    params = init_params(config, vocab_size=12)
    rng = np.random.default_rng(5)
    ids = rng.integers(0, 12, size=(2, 4))
    mask = np.ones((2, 4))
    mask[1, 3] = 0.0
    loss_mask = mask.astype(bool)
    targets = rng.integers(0, 31, size=(2, 4))
    _, grads = loss_and_grads(params, ids, mask, targets, loss_mask, "arg")
    eps, checked = 1e-4, 0
    for name, tensor in params.items():
        flat = tensor.ravel()
        for idx in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + eps
            up, _ = loss_and_grads(params, ids, mask, targets, loss_mask, "arg")
            flat[idx] = orig - eps
            down, _ = loss_and_grads(params, ids, mask, targets, loss_mask, "arg")
            flat[idx] = orig
            fd = (up - down) / (2 * eps)
            an = grads[name].ravel()[idx]
            assert abs(fd - an) / max(1e-8, abs(fd) + abs(an)) <= 1e-3
            checked += 1
    assert checked >= 30

    quick = TaggerConfig(embedding_dim=8, hidden_dim=8, epochs=2,
                         batch_size=4, warmup_steps=2, seed=3)
    a = train(split, cases, quick)
    b = train(split, cases, quick)
    assert a.history == b.history
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    ok(8, f"overfit >=99% both tasks in {elapsed:.1f}s; gradients and "
          "determinism verified")


# ---------------------------------------------------------------------------
# 9. feature invariants (and released-data averages)

def test_c09_feature_fractions_sum_to_one():
    cases = make_corpus(n_cases=30, seed=5)
    for case in cases:
        fv = extract_features(case)
        assert abs(sum(fv.fraction_argtype) - 1.0) <= 1e-9
        assert abs(sum(fv.fraction_actor) - 1.0) <= 1e-9
    ok(9, "argument-type and actor fraction groups sum to 1 on every case")


def test_c09_released_level1_fractions():
    if not RELEASED:
        skip(9, "released corpus absent (set ARGMINE_RELEASED_CORPUS)")
    cases = load_corpus(RELEASED, min_spans=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = feature_averages(cases)
    col = table.levels.index(1)
    argtype_rows = [i for i, name in enumerate(table.feature_names)
                    if name.startswith("fraction_argtype:")]
    total = sum(table.values[i, col] for i in argtype_rows)
    assert abs(total - 1.00) <= 0.02
    ok(9, "level-1 argument-type fraction averages sum to 1.00 +/- 0.02")


# ---------------------------------------------------------------------------
# 10. linear classifier on the separable fixture

def test_c10_classifier_perfect_on_separable_fixture():
    X, y = separable_features(n_per=10)
    start = time.monotonic()
    for c in (1.0, 10.0, 100.0, 1000.0):
        model = grid_search_train(X, y, GridConfig(c_values=(c,), epochs=800),
                                  seed=0)
        train_idx = list(model.train_indices)
        preds = model.predict(X[train_idx])
        assert list(preds) == list(y[train_idx]), f"C={c} not separable"
    elapsed = time.monotonic() - start
    assert elapsed < 60.0, f"classifier fits took {elapsed:.1f}s"

    folds_a = stratified_folds(y, 5, seed=4)
    folds_b = stratified_folds(y, 5, seed=4)
    assert folds_a == folds_b
    seen = sorted(i for f in folds_a for i in f)
    assert seen == list(range(len(y)))
    for fold in folds_a:
        per_class = {c: sum(1 for i in fold if y[i] == c) for c in (1, 2, 3, 4)}
        assert set(per_class.values()) == {2}
    ok(10, f"100% training accuracy for C>=1 in {elapsed:.1f}s; folds "
           "deterministic and stratified")


# ---------------------------------------------------------------------------
# 11. split sizes and label coverage

def test_c11_split_373_cases_and_label_coverage():
    cases = make_corpus(n_cases=373, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        split = stratified_split(cases, (0.80, 0.10, 0.10), seed=0)
    assert (len(split.train), len(split.dev), len(split.test)) == (299, 37, 37)

    span_count, case_labels = {}, {}
    for case in cases:
        for s in case.gold_spans:
            for key in (("arg", s.arg_type), ("actor", s.actor)):
                span_count[key] = span_count.get(key, 0) + 1
                case_labels.setdefault(case.case_id, set()).add(key)
    for part in (split.train, split.dev, split.test):
        present = set()
        for cid in part:
            present |= case_labels.get(cid, set())
        for key, n in span_count.items():
            if n >= 3:
                assert key in present, f"{key} missing from a split"
    ok(11, "373 cases split 299/37/37; labels with >=3 spans in all splits")


# ---------------------------------------------------------------------------
# 12. transfer difference convention

def test_c12_transfer_difference_convention():
    assert transfer_diff(43.13, 31.49) == -27
    assert transfer_diff(56.60, 0.09) == -100
    assert transfer_diff(0.0, 0.0) == 0
    assert transfer_diff(0.0, 5.0) is None
    ok(12, "difference column follows the published rounding convention")
