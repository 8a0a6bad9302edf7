"""Supervised fine-tuning loop: masked cross-entropy on target tokens,
linear warmup, per-step metrics logging, and early stopping on document-level
holdout loss.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F

from .data import (
    IGNORE_INDEX,
    EncodedExample,
    SchemaError,
    check_document_disjoint,
    collate,
    encode_example,
    load_examples,
    reshuffle_context,
)
from .lora import adapter_state, inject_lora, load_adapter_state, save_adapter
from .models import load_base


class OutOfMemory(RuntimeError):
    pass


@dataclass
class TrainConfig:
    base_model: str = "tiny"
    lora_rank: int = 16
    lora_alpha: int = 16
    learning_rate: float = 5e-5
    batch_size: int = 2
    warmup_steps: int = 10
    epochs: int = 10
    seed: int = 0
    max_seq_len: int = 1024
    early_stop_patience: int = 2
    reshuffle_each_epoch: bool = False

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class TrainResult:
    adapter_dir: Path
    metrics_path: Path
    steps: int
    step_losses: list[float] = field(default_factory=list)
    holdout_losses: list[float] = field(default_factory=list)
    truncated_examples: int = 0
    stopped_early: bool = False


def _batch_loss(model, forward, batch) -> torch.Tensor:
    logits = forward(model, batch)
    # next-token prediction: shift logits left against labels
    shift_logits = logits[:, :-1, :]
    shift_labels = batch["labels"][:, 1:]
    return F.cross_entropy(
        shift_logits.reshape(-1, shift_logits.size(-1)),
        shift_labels.reshape(-1),
        ignore_index=IGNORE_INDEX,
    )


def _holdout_loss(model, forward, encoded: list[EncodedExample], pad_id: int,
                  batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(encoded), batch_size):
            batch = collate(encoded[i : i + batch_size], pad_id)
            loss = _batch_loss(model, forward, batch)
            n = int((batch["labels"] != IGNORE_INDEX).sum())
            total += float(loss) * n
            count += n
    model.train()
    return total / max(count, 1)


def train(
    config: TrainConfig,
    train_file: str | Path,
    holdout_file: str | Path | None,
    out_dir: str | Path,
) -> TrainResult:
    """Train adapters and write ``adapter/`` plus ``metrics.jsonl`` under
    ``out_dir``. Raises SchemaError on malformed inputs or holdout leakage."""
    torch.manual_seed(config.seed)
    train_examples = load_examples(train_file)
    if not train_examples:
        raise SchemaError(f"{train_file}: no training examples")
    holdout_examples = []
    if holdout_file is not None:
        holdout_examples = load_examples(holdout_file)
        check_document_disjoint(train_examples, holdout_examples)

    model, tokenizer, forward = load_base(config.base_model)
    inject_lora(model, config.lora_rank, config.lora_alpha)
    model.train()
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate)

    truncated = 0

    def encode_all(examples, rng=None):
        nonlocal truncated
        out = []
        for ex in examples:
            override = reshuffle_context(ex.prompt, rng) if rng is not None else None
            enc = encode_example(ex, tokenizer, config.max_seq_len, override)
            truncated += enc.truncated
            out.append(enc)
        return out

    encoded_holdout = encode_all(holdout_examples) if holdout_examples else []
    truncated = 0  # report truncations on the training side only

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path = out / "metrics.jsonl"
    adapter_dir = out / "adapter"
    result = TrainResult(adapter_dir, metrics_path, steps=0)

    order_rng = random.Random(config.seed)
    step = 0
    best_holdout = float("inf")
    best_state = adapter_state(model)
    bad_epochs = 0

    with open(metrics_path, "w", encoding="utf-8") as metrics:
        try:
            for epoch in range(config.epochs):
                shuffle_rng = (
                    random.Random((config.seed, epoch)) if config.reshuffle_each_epoch else None
                )
                if epoch == 0 or config.reshuffle_each_epoch:
                    truncated = 0
                    encoded = encode_all(train_examples, shuffle_rng)
                    result.truncated_examples = truncated
                order = list(range(len(encoded)))
                order_rng.shuffle(order)
                for i in range(0, len(order), config.batch_size):
                    batch = collate([encoded[j] for j in order[i : i + config.batch_size]],
                                    tokenizer.pad_id)
                    step += 1
                    warm = min(1.0, step / config.warmup_steps) if config.warmup_steps else 1.0
                    for group in optimizer.param_groups:
                        group["lr"] = config.learning_rate * warm
                    optimizer.zero_grad()
                    loss = _batch_loss(model, forward, batch)
                    if not torch.isfinite(loss):
                        raise RuntimeError(f"non-finite loss at step {step}")
                    loss.backward()
                    optimizer.step()
                    loss_value = float(loss.detach())
                    result.step_losses.append(loss_value)
                    metrics.write(
                        json.dumps(
                            {"step": step, "epoch": epoch, "loss": loss_value,
                             "lr": config.learning_rate * warm}
                        )
                        + "\n"
                    )
                if encoded_holdout:
                    h_loss = _holdout_loss(
                        model, forward, encoded_holdout, tokenizer.pad_id, config.batch_size
                    )
                    result.holdout_losses.append(h_loss)
                    metrics.write(json.dumps({"epoch": epoch, "holdout_loss": h_loss}) + "\n")
                    if h_loss < best_holdout:
                        best_holdout = h_loss
                        best_state = adapter_state(model)
                        bad_epochs = 0
                    else:
                        bad_epochs += 1
                        if bad_epochs >= config.early_stop_patience:
                            result.stopped_early = True
                            break
        except torch.cuda.OutOfMemoryError as exc:
            raise OutOfMemory(
                f"out of memory at batch_size={config.batch_size}; retry with a smaller batch"
            ) from exc
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower():
                raise OutOfMemory(
                    f"out of memory at batch_size={config.batch_size}; retry with a smaller batch"
                ) from exc
            raise

    result.steps = step
    if encoded_holdout and config.epochs > 0:
        load_adapter_state(model, best_state)  # keep the best-holdout adapter
    save_adapter(
        model,
        adapter_dir,
        {
            "base_model": config.base_model,
            "rank": config.lora_rank,
            "alpha": config.lora_alpha,
            "target": "all-linear",
            "train_config": config.as_dict(),
            "steps": step,
            "truncated_examples": result.truncated_examples,
            "stopped_early": result.stopped_early,
        },
    )
    return result
