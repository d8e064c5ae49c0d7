"""Command line entry point: tiny base builder, fine-tuning, prediction."""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import FinetuneConfig
from .data import DataError, read_corpus, read_split, write_predictions
from .finetune import finetune, load_checkpoint, predict_corpus, save_checkpoint
from .tiny import build_tiny_base


def cmd_tiny(args) -> int:
    out = build_tiny_base(args.corpus, args.out, hidden_size=args.hidden_size,
                          num_layers=args.layers, num_heads=args.heads,
                          seed=args.seed)
    print(f"tiny base model written to {out}")
    return 0


def cmd_finetune(args) -> int:
    corpus = read_corpus(args.corpus)
    split = read_split(args.split)
    config = FinetuneConfig(base_model=args.base, epochs=args.epochs,
                            learning_rate=args.learning_rate,
                            batch_size=args.batch_size,
                            weight_decay=args.weight_decay,
                            warmup_steps=args.warmup_steps,
                            max_length=args.max_length, seed=args.seed)
    model, tokenizer, config, history, best_epoch = finetune(corpus, split, config)
    save_checkpoint(args.out, model, tokenizer, config, history, best_epoch)
    for r in history:
        loss = "" if r.train_loss is None else f"{r.train_loss:.6f}"
        print(f"epoch {r.epoch}\tloss {loss}\tdev_arg_f1 {r.dev_arg_f1:.2f}"
              f"\tdev_actor_f1 {r.dev_actor_f1:.2f}\tcombined {r.combined:.2f}")
    print(f"best epoch {best_epoch} -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    model, tokenizer, config, _, _ = load_checkpoint(args.ckpt)
    corpus = read_corpus(args.corpus)
    ids = args.cases.split(",") if args.cases else None
    rows = predict_corpus(model, tokenizer, corpus, config, ids)
    write_predictions(args.out, rows,
                      header_comments=[f"tool: hftrainer {__version__}",
                                       "subcommand: predict",
                                       f"seed: {config.seed}"])
    print(f"wrote predictions for {len(rows)} paragraph(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hftrainer",
        description="Fine-tune a pretrained transformer on the argmine "
                    "corpus format with two token-classification heads.")
    parser.add_argument("--version", action="version",
                        version=f"hftrainer {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("tiny", help="build a tiny local base model for smoke runs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden-size", type=int, default=32)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tiny)

    p = sub.add_parser("finetune", help="fine-tune on a corpus split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--base", required=True, help="base model directory or id")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--warmup-steps", type=int, default=None)
    p.add_argument("--max-length", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="tag a corpus with a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--cases", help="comma-separated case ids (default: all)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (DataError, ValueError, KeyError, OSError, RuntimeError) as e:
        print(f"hftrainer: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
