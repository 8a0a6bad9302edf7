"""Command-line trainer: ``sunset-finetune --config train.toml``.

The [train] table of the config carries TrainConfig fields plus train_file,
holdout_file, and out_dir; flags override the file.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from .data import SchemaError
from .train import OutOfMemory, TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sunset-finetune", description=__doc__)
    parser.add_argument("--config", default=None, help="TOML config with a [train] table")
    parser.add_argument("--train-file", default=None)
    parser.add_argument("--holdout-file", default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--base-model", default=None)
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--reshuffle-each-epoch", action="store_true", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    section: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            print(f"error[user]: config not found: {path}", file=sys.stderr)
            return 1
        with open(path, "rb") as fh:
            section = tomllib.load(fh).get("train", {})

    def pick(flag, key, default):
        return flag if flag is not None else section.get(key, default)

    train_file = pick(args.train_file, "train_file", None)
    if train_file is None:
        print("error[user]: no train_file given (flag or [train] config)", file=sys.stderr)
        return 1
    holdout_file = pick(args.holdout_file, "holdout_file", None)
    out_dir = pick(args.out, "out_dir", "finetune-run")

    config = TrainConfig(
        base_model=pick(args.base_model, "base_model", "tiny"),
        lora_rank=int(section.get("lora_rank", 16)),
        lora_alpha=int(section.get("lora_alpha", 16)),
        learning_rate=float(section.get("learning_rate", 5e-5)),
        batch_size=int(section.get("batch_size", 2)),
        warmup_steps=int(section.get("warmup_steps", 10)),
        epochs=pick(args.epochs, "epochs", 10),
        seed=pick(args.seed, "seed", 0),
        max_seq_len=int(section.get("max_seq_len", 1024)),
        early_stop_patience=int(section.get("early_stop_patience", 2)),
        reshuffle_each_epoch=bool(
            pick(args.reshuffle_each_epoch, "reshuffle_each_epoch", False)
        ),
    )
    try:
        result = train(config, train_file, holdout_file, out_dir)
    except SchemaError as exc:
        print(f"error[user]: {exc}", file=sys.stderr)
        return 1
    except OutOfMemory as exc:
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return 2
    last = result.step_losses[-1] if result.step_losses else float("nan")
    print(
        f"trained {result.steps} steps (final loss {last:.4f}"
        + (f", best holdout {min(result.holdout_losses):.4f}" if result.holdout_losses else "")
        + f") -> {result.adapter_dir}"
    )
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
