"""Command line entry point.

One subcommand per pipeline stage; every artifact written carries a
metadata header (tool version, subcommand, config hash, seed) so runs
are traceable.  Flags can be pre-seeded from a JSON config file via
--config; explicit flags always win.  ARGMINE_CORPUS supplies the
default corpus directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .agreement import batch_report, render_batch_rows
from .biocodec import case_records, read_tsv, write_tsv
from .corpus import (CorpusError, corpus_stats, load_corpus, load_split,
                     save_case, save_split, stratified_split, validate_case)
from .evaluation import confusion, render_metrics_rows, render_transfer_rows, token_prf, transfer_report
from .importance import (GridConfig, classification_report, corpus_features,
                         feature_averages, feature_importance, FEATURE_NAMES,
                         grid_search_train, load_model, render_averages_rows,
                         render_report_rows, save_model)
from .ingest import extract_case, read_document, trim_to_law
from .reporting import (artifact_header, save_confusion_heatmap,
                        save_weights_chart, write_table)
from .tagger import (TaggerConfig, load_checkpoint, predictions_by_paragraph,
                     save_checkpoint, train)

ENV_CORPUS = "ARGMINE_CORPUS"


class UsageError(Exception):
    pass


def _corpus_dir(args) -> Path:
    value = getattr(args, "corpus", None) or os.environ.get(ENV_CORPUS)
    if not value:
        raise UsageError("no corpus directory: pass --corpus or set ARGMINE_CORPUS")
    return Path(value)


def _header(args, extra_seed=None):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    seed = extra_seed if extra_seed is not None else getattr(args, "seed", None)
    return artifact_header(args.command, cfg, seed)


def _emit(args, lines, header):
    if getattr(args, "out", None):
        write_table(args.out, lines, header)
    else:
        for line in lines:
            print(line)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(path_str: str) -> str:
        path = Path(path_str)
        case = extract_case(read_document(path), path.stem, fmt=args.format,
                            article=args.article, importance=args.importance)
        if args.trim_law:
            case = trim_to_law(case)
        save_case(case, out_dir / f"{case.case_id}.json")
        return case.case_id

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            ids = list(pool.map(one, args.input))
    else:
        ids = [one(p) for p in args.input]
    print(f"ingested {len(ids)} case(s) into {out_dir}")
    return 0


def cmd_validate(args) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cases = load_corpus(_corpus_dir(args), min_spans=0)
    bad = 0
    for case in cases:
        report = validate_case(case)
        if not report.ok:
            bad += 1
            for v in report.violations:
                print(f"{case.case_id}\t{v.rule}\t{v.message}")
    print(f"checked {len(cases)} case(s), {bad} with violations")
    return 1 if bad else 0


def cmd_stats(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    table = corpus_stats(cases)
    lines = ["table\tlabel\tcount\tpct"]
    for name in ("arg_spans", "actor_spans", "arg_tags", "actor_tags"):
        for label, count, pct in table.rows(name):
            lines.append(f"{name}\t{label}\t{count}\t{pct:.2f}")
    lines.append(f"totals\tspans\t{table.total_spans}\t")
    lines.append(f"totals\ttokens\t{table.total_tokens}\t")
    _emit(args, lines, _header(args))
    return 0


def cmd_split(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    split = stratified_split(cases, ratios, seed=args.seed)
    meta = {h.split(": ", 1)[0]: h.split(": ", 1)[1] for h in _header(args)}
    save_split(split, args.out, meta)
    print(f"split {len(cases)} cases into "
          f"{len(split.train)}/{len(split.dev)}/{len(split.test)}")
    return 0


def cmd_encode(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    records = [r for case in cases for r in case_records(case)]
    write_tsv(args.out, records, header_comments=_header(args))
    print(f"encoded {len(records)} paragraph(s) to {args.out}")
    return 0


def cmd_agree(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=0)
    if args.batches:
        batches = json.loads(Path(args.batches).read_text(encoding="utf-8"))
    else:
        batches = {"all": [c.case_id for c in cases]}
    rows = batch_report(cases, batches)
    _emit(args, render_batch_rows(rows), _header(args))
    return 0


def cmd_train(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    split = load_split(args.split)
    config = TaggerConfig(embedding_dim=args.embedding_dim,
                          hidden_dim=args.hidden_dim, epochs=args.epochs,
                          learning_rate=args.learning_rate,
                          batch_size=args.batch_size,
                          weight_decay=args.weight_decay,
                          warmup_steps=args.warmup_steps, seed=args.seed)
    ckpt = train(split, cases, config)
    save_checkpoint(ckpt, args.out)
    lines = ["epoch\targ_loss\tactor_loss\tdev_arg_f1\tdev_actor_f1\tcombined"]
    for r in ckpt.history:
        al = "" if r.arg_loss is None else f"{r.arg_loss:.6f}"
        cl = "" if r.actor_loss is None else f"{r.actor_loss:.6f}"
        lines.append(f"{r.epoch}\t{al}\t{cl}\t{r.dev_arg_f1:.4f}"
                     f"\t{r.dev_actor_f1:.4f}\t{r.combined:.4f}")
    if args.log:
        write_table(args.log, lines, _header(args))
    else:
        for line in lines:
            print(line)
    print(f"best epoch {ckpt.epoch} "
          f"(combined dev F1 {ckpt.dev_metrics['combined']:.4f}) -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    if args.cases:
        wanted = set(args.cases.split(","))
        cases = [c for c in cases if c.case_id in wanted]
        missing = wanted - {c.case_id for c in cases}
        if missing:
            raise CorpusError(f"unknown case ids: {sorted(missing)}")
    records = []
    for case in cases:
        preds = predictions_by_paragraph(ckpt, case)
        records.extend(case_records(case, preds))
    write_tsv(args.out, records, header_comments=_header(args, ckpt.config.seed))
    print(f"wrote predictions for {len(records)} paragraph(s) to {args.out}")
    return 0


def _records_to_sequences(records, dimension: str):
    gold_attr = f"gold_{dimension}"
    pred_attr = f"pred_{dimension}"
    gold = [list(getattr(r, gold_attr)) for r in records]
    pred = [list(getattr(r, pred_attr)) for r in records]
    return gold, pred


def cmd_eval(args) -> int:
    records = read_tsv(args.pred)
    dims = ("arg", "actor") if args.dimension == "both" else (args.dimension,)
    lines = []
    header = _header(args)
    for dim in dims:
        gold, pred = _records_to_sequences(records, dim)
        table = token_prf(gold, pred, dimension=dim)
        lines.append(f"== {dim} ==")
        lines.extend(render_metrics_rows(table))
        if args.figures:
            fig_dir = Path(args.figures)
            fig_dir.mkdir(parents=True, exist_ok=True)
            matrix = confusion(gold, pred)
            save_confusion_heatmap(matrix, fig_dir / f"confusion_{dim}.png",
                                   header, title=f"Confusion ({dim})")
    _emit(args, lines, header)
    return 0


def cmd_transfer(args) -> int:
    orig_records = read_tsv(args.orig)
    new_records = read_tsv(args.new)
    o_gold, o_pred = _records_to_sequences(orig_records, args.dimension)
    n_gold, n_pred = _records_to_sequences(new_records, args.dimension)
    orig_table = token_prf(o_gold, o_pred, dimension=args.dimension)
    new_table = token_prf(n_gold, n_pred, dimension=args.dimension)
    report = transfer_report(orig_table, new_table)
    _emit(args, render_transfer_rows(report), _header(args))
    return 0


def cmd_importance(args) -> int:
    cases = load_corpus(_corpus_dir(args), min_spans=args.min_spans)
    header = _header(args)
    if args.action == "features":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X, y, ids, _ = corpus_features(cases)
        lines = ["case_id\tlevel\t" + "\t".join(FEATURE_NAMES)]
        for i, cid in enumerate(ids):
            vals = "\t".join(f"{v:.6f}" for v in X[i])
            lines.append(f"{cid}\t{y[i]}\t{vals}")
        _emit(args, lines, header)
        return 0
    if args.action == "train":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X, y, ids, _ = corpus_features(cases)
        model = grid_search_train(X, y, GridConfig(), seed=args.seed)
        save_model(model, args.out, case_ids=ids)
        for c in sorted(model.cv_scores):
            print(f"C={c}\tcv_macro_f1={model.cv_scores[c]:.4f}")
        print(f"chosen C={model.chosen_c} -> {args.out}")
        return 0
    if args.action == "report":
        model, case_ids = load_model(args.model)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X, y, ids, _ = corpus_features(cases)
        if case_ids is not None and case_ids != ids:
            raise CorpusError("corpus does not match the model's training corpus")
        hold = list(model.holdout_indices)
        report = classification_report(model, X[hold], y[hold])
        lines = render_report_rows(report)
        ranked = feature_importance(X, y, args.level_a, args.level_b,
                                    C=model.chosen_c)
        if args.weights_out:
            weight_lines = ["feature\tweight"]
            weight_lines += [f"{r.feature}\t{r.weight:.6f}" for r in ranked]
            write_table(args.weights_out, weight_lines, header)
        if args.figures:
            fig_dir = Path(args.figures)
            fig_dir.mkdir(parents=True, exist_ok=True)
            save_weights_chart(ranked, fig_dir / "feature_weights.png", header,
                               title=f"Level {args.level_a} vs {args.level_b}")
        _emit(args, lines, header)
        return 0
    if args.action == "averages":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = feature_averages(cases)
        _emit(args, render_averages_rows(table), header)
        return 0
    raise UsageError(f"unknown importance action {args.action!r}")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="argmine",
        description="Argument mining over court decisions: corpus tools, "
                    "agreement, tagging, evaluation, importance.")
    parser.add_argument("--version", action="version",
                        version=f"argmine {__version__}")
    parser.add_argument("--config", help="JSON file with default flag values")
    subcommands = parser.add_subparsers(dest="command")
    parser.subcommands = {}

    def sub_parser(name, **kw):
        # kept in a registry so config-file defaults can reach subparsers,
        # whose own defaults would otherwise overwrite them
        sp = subcommands.add_parser(name, **kw)
        parser.subcommands[name] = sp
        return sp
    sub = argparse.Namespace(add_parser=sub_parser)

    def corpus_flags(p, min_spans_default=5):
        p.add_argument("--corpus", help="corpus directory (or ARGMINE_CORPUS)")
        p.add_argument("--min-spans", dest="min_spans", type=int,
                       default=min_spans_default)

    p = sub.add_parser("ingest", help="parse raw decisions into corpus JSON")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--format", choices=("text", "html"), default="text")
    p.add_argument("--article", type=int)
    p.add_argument("--importance", type=int)
    p.add_argument("--trim-law", dest="trim_law", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("validate", help="check corpus invariants")
    corpus_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="span and tag distribution tables")
    corpus_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="stratified train/dev/test split")
    corpus_flags(p)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("encode", help="gold BIO sequences as TSV")
    corpus_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("agree", help="inter-annotator agreement per batch")
    corpus_flags(p)
    p.add_argument("--batches", help="JSON file: batch name -> case ids")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("train", help="train the sequence tagger")
    corpus_flags(p)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the epoch log to this file")
    p.add_argument("--embedding-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--warmup-steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="tag cases with a trained checkpoint")
    corpus_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cases", help="comma-separated case ids (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="token-level metrics for a prediction TSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--dimension", choices=("arg", "actor", "both"),
                   default="both")
    p.add_argument("--out")
    p.add_argument("--figures", help="directory for confusion heat maps")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer", help="metric differences between two runs")
    p.add_argument("--orig", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--dimension", choices=("arg", "actor"), default="arg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("importance", help="case importance prediction tools")
    p.add_argument("action", choices=("features", "train", "report", "averages"))
    corpus_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--model", help="model file (report)")
    p.add_argument("--level-a", type=int, default=1)
    p.add_argument("--level-b", type=int, default=4)
    p.add_argument("--weights-out", help="ranked weight table (report)")
    p.add_argument("--figures", help="directory for the weight chart (report)")
    p.set_defaults(func=cmd_importance)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    parser = build_parser()
    if known.config:
        try:
            defaults = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            print(f"argmine: bad config file: {e}", file=sys.stderr)
            return 2
        if not isinstance(defaults, dict):
            print("argmine: config file must hold a JSON object", file=sys.stderr)
            return 2
        parser.set_defaults(**defaults)
        for sp in parser.subcommands.values():
            sp.set_defaults(**defaults)
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "importance" and args.action in ("train",) and not args.out:
        print("argmine importance train: --out is required", file=sys.stderr)
        return 2
    if args.command == "importance" and args.action == "report" and not args.model:
        print("argmine importance report: --model is required", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as e:
        print(f"argmine: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (CorpusError, ValueError, RuntimeError, OSError) as e:
        print(f"argmine: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
