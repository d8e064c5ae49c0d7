import io
import itertools
from random import Random

import pytest

from argmine.biocodec import (IGNORE, AlignmentMismatch, InvalidSequence, LabelSequence,
                              OverlappingSpans, ParagraphRecord, SpanOutOfBounds,
                              SubwordAlignment, case_records, decode_bio, encode_bio,
                              map_subword_predictions, parse_tag, read_tsv, repair_bio,
                              tag_names, write_tsv)
from argmine.corpus import Actor, ArgType, ArgumentSpan

from conftest import make_case, make_paragraph


def seq(labels, dimension="arg", pid="1"):
    return LabelSequence(dimension, pid, tuple(labels))


def test_tag_vocabulary_sizes():
    assert len(tag_names("arg")) == 31
    assert len(tag_names("actor")) == 11
    assert parse_tag("B-Application case", "arg") == ("B", ArgType.ApplicationCase)
    assert parse_tag("I-Commission/Chamber", "actor") == ("I", Actor.CommissionChamber)
    assert parse_tag("O", "arg") == ("O", None)
    with pytest.raises(InvalidSequence):
        parse_tag("B-Nonsense", "arg")


def test_encode_hand_example():
    par = make_paragraph("1", ["w"] * 6)
    spans = [ArgumentSpan("1", 0, 2, ArgType.LegalBasis, Actor.State),
             ArgumentSpan("1", 3, 6, ArgType.ApplicationCase, Actor.ECHR)]
    got = encode_bio(par, spans, "arg")
    assert got.labels == ("B-Legal basis", "I-Legal basis", "O",
                          "B-Application case", "I-Application case", "I-Application case")
    got2 = encode_bio(par, spans, "actor")
    assert got2.labels == ("B-State", "I-State", "O", "B-ECHR", "I-ECHR", "I-ECHR")


def test_encode_errors():
    par = make_paragraph("1", ["w"] * 4)
    with pytest.raises(SpanOutOfBounds):
        encode_bio(par, [ArgumentSpan("1", 2, 5, ArgType.Overruling, Actor.ECHR)], "arg")
    with pytest.raises(OverlappingSpans):
        encode_bio(par, [ArgumentSpan("1", 0, 2, ArgType.Overruling, Actor.ECHR),
                         ArgumentSpan("1", 1, 3, ArgType.LegalBasis, Actor.State)], "arg")
    with pytest.raises(ValueError):
        encode_bio(par, [ArgumentSpan("1", 0, 2, None, Actor.ECHR)], "arg")


def _random_spans(rng, n_tokens, members):
    spans, pos = [], 0
    while pos < n_tokens:
        if rng.random() < 0.55:
            length = rng.randint(1, min(4, n_tokens - pos))
            m = rng.choice(members)
            spans.append((pos, pos + length, m))
            pos += length
        else:
            pos += 1
    return spans


@pytest.mark.parametrize("dimension,members", [("arg", list(ArgType)),
                                               ("actor", list(Actor))])
def test_round_trip_random(dimension, members):
    rng = Random(99)
    for _ in range(2000):
        n = rng.randint(1, 14)
        par = make_paragraph("7", ["w"] * n)
        triples = _random_spans(rng, n, members)
        kw = "arg_type" if dimension == "arg" else "actor"
        spans = [ArgumentSpan("7", a, b, **{kw: m}) for a, b, m in triples]
        enc = encode_bio(par, spans, dimension)
        back = decode_bio(enc)
        got = [(s.tok_start, s.tok_end,
                s.arg_type if dimension == "arg" else s.actor) for s in back]
        assert got == triples


def test_decode_strict_orphan():
    with pytest.raises(InvalidSequence):
        decode_bio(seq(["O", "I-Overruling"]))
    spans = decode_bio(seq(["O", "I-Overruling"]), strict=False)
    assert [(s.tok_start, s.tok_end, s.arg_type) for s in spans] == \
        [(1, 2, ArgType.Overruling)]


def test_decode_adjacent_b():
    spans = decode_bio(seq(["B-Overruling", "B-Overruling", "I-Overruling"]))
    assert [(s.tok_start, s.tok_end) for s in spans] == [(0, 1), (1, 3)]


def test_repair_label_switch():
    got = repair_bio(seq(["B-Overruling", "I-Legal basis"]))
    assert got.labels == ("B-Overruling", "B-Legal basis")


def test_repair_orphan_becomes_b():
    got = repair_bio(seq(["O", "I-Suitability", "I-Suitability"]))
    assert got.labels == ("O", "B-Suitability", "I-Suitability")


def oracle_repair(labels):
    """Independent reference: track the open label while scanning left to right."""
    out, open_lab = [], None
    for tag in labels:
        if tag == "O":
            out.append("O")
            open_lab = None
        elif tag.startswith("B-"):
            out.append(tag)
            open_lab = tag[2:]
        else:
            lab = tag[2:]
            out.append(tag if open_lab == lab else "B-" + lab)
            open_lab = lab
    return tuple(out)


def test_repair_exhaustive_three_tokens():
    tags = ["O", "B-Overruling", "I-Overruling", "B-Suitability", "I-Suitability"]
    for combo in itertools.product(tags, repeat=3):
        s = seq(list(combo))
        rep = repair_bio(s)
        assert rep.labels == oracle_repair(combo)
        # structural guarantees: decodes strictly, fixpoint, O/B untouched,
        # I only ever turns into B of the same label
        decode_bio(rep)
        assert repair_bio(rep) == rep
        for orig, new in zip(combo, rep.labels):
            if orig == "O" or orig.startswith("B-"):
                assert new == orig
            else:
                assert new in (orig, "B-" + orig[2:])


def test_repair_valid_untouched():
    rng = Random(5)
    for _ in range(500):
        n = rng.randint(1, 12)
        par = make_paragraph("1", ["w"] * n)
        spans = [ArgumentSpan("1", a, b, arg_type=m)
                 for a, b, m in _random_spans(rng, n, list(ArgType))]
        enc = encode_bio(par, spans, "arg")
        assert repair_bio(enc) == enc


# ---------------------------------------------------------------------------
# subword mapping

def test_subword_published_example():
    pieces = ["en", "##tail", "##ed", "by", "Mr", ".", "Be", "##rre", "##hab"]
    labels = ["I-Sub", IGNORE, IGNORE, "I-Sub", "I-Sub", "I-Sub", "I-Sub", IGNORE, IGNORE]
    align = SubwordAlignment((3, 1, 1, 1, 3))
    assert align.total_pieces == len(pieces)
    assert map_subword_predictions(labels, align) == ["I-Sub"] * 5


def test_subword_ignores_non_initial_values():
    labels = ["B-X", "I-Q", "W", "B-Y"]
    assert map_subword_predictions(labels, SubwordAlignment((3, 1))) == ["B-X", "B-Y"]


def test_subword_sentinel_on_first_piece():
    assert map_subword_predictions([IGNORE, "B-X"], SubwordAlignment((1, 1))) == ["O", "B-X"]


def test_subword_mismatch():
    with pytest.raises(AlignmentMismatch):
        map_subword_predictions(["a", "b"], SubwordAlignment((1, 1, 1)))
    with pytest.raises(AlignmentMismatch):
        map_subword_predictions(["a"], SubwordAlignment((1, 0)))


# ---------------------------------------------------------------------------
# TSV interchange

def test_tsv_round_trip():
    case = make_case("c1", n_paragraphs=3, spans_per_par=2, seed=1)
    records = case_records(case)
    buf = io.StringIO()
    write_tsv(buf, records, header_comments=["tool=argmine test"])
    text = buf.getvalue()
    assert "# case=c1 par=1" in text
    assert "\n\n" in text
    back = read_tsv(io.StringIO(text))
    assert back == records


def test_tsv_labels_with_spaces_survive():
    rec = ParagraphRecord("c", "9", ("a", "b"),
                          ("B-Application case", "I-Application case"),
                          ("B-Commission/Chamber", "I-Commission/Chamber"),
                          ("O", "O"), ("O", "O"))
    buf = io.StringIO()
    write_tsv(buf, [rec])
    back = read_tsv(io.StringIO(buf.getvalue()))
    assert back == [rec]


def test_tsv_column_count_enforced():
    with pytest.raises(InvalidSequence):
        read_tsv(io.StringIO("# case=c par=1\nx\ty\tz\n"))


def test_record_length_mismatch():
    with pytest.raises(AlignmentMismatch):
        ParagraphRecord("c", "1", ("a", "b"), ("O",), ("O", "O"), ("O", "O"), ("O", "O"))
