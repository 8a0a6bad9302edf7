"""Training-example loading and batching.

Input is the exported JSON Lines schema: one object per line with string
fields ``prompt`` and ``target`` plus ``meta.document_id`` (and optionally
``meta.shuffled`` / ``meta.seed``). Loss is computed on target tokens only;
prompts are masked with ``IGNORE_INDEX``.
"""
from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path

import torch

IGNORE_INDEX = -100


class SchemaError(ValueError):
    """Input file does not conform to the training-example schema."""


@dataclass
class TrainingExample:
    prompt: str
    target: str
    document_id: str
    shuffled: bool = False
    seed: int = 0


def load_examples(path: str | Path) -> list[TrainingExample]:
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"{p}: file not found")
    examples: list[TrainingExample] = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise SchemaError(f"{p}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(rec, dict):
                raise SchemaError(f"{p}:{lineno}: expected an object")
            prompt = rec.get("prompt")
            target = rec.get("target")
            meta = rec.get("meta")
            if not isinstance(prompt, str) or not isinstance(target, str):
                raise SchemaError(f"{p}:{lineno}: prompt and target must be strings")
            if not isinstance(meta, dict) or not isinstance(meta.get("document_id"), str):
                raise SchemaError(f"{p}:{lineno}: meta.document_id missing")
            examples.append(
                TrainingExample(
                    prompt=prompt,
                    target=target,
                    document_id=meta["document_id"],
                    shuffled=bool(meta.get("shuffled", False)),
                    seed=int(meta.get("seed", 0)),
                )
            )
    return examples


def check_document_disjoint(
    train: list[TrainingExample], holdout: list[TrainingExample]
) -> None:
    """Holdout loss must come from unseen documents; overlap is leakage."""
    overlap = {e.document_id for e in train} & {e.document_id for e in holdout}
    if overlap:
        raise SchemaError(
            f"holdout leaks {len(overlap)} training document(s), e.g. {sorted(overlap)[:3]}"
        )


_DOC_SLOT = re.compile(r"(Here is the document: )(.*?)(\n\n\*\*OUTPUT FORMAT\*\*)", re.S)


def reshuffle_context(prompt: str, rng: random.Random) -> str:
    """Optional per-epoch augmentation: permute the blank-line-separated blocks
    of the inlined document context. Approximate when sections themselves
    contain blank lines; off by default."""
    m = _DOC_SLOT.search(prompt)
    if m is None:
        return prompt
    blocks = m.group(2).split("\n\n")
    if len(blocks) < 2:
        return prompt
    rng.shuffle(blocks)
    return prompt[: m.start(2)] + "\n\n".join(blocks) + prompt[m.end(2) :]


@dataclass
class EncodedExample:
    input_ids: list[int]
    labels: list[int]
    truncated: bool


def encode_example(
    example: TrainingExample,
    tokenizer,
    max_seq_len: int,
    prompt_override: str | None = None,
) -> EncodedExample:
    """Tokenize prompt+target; prompt positions are masked in the labels.

    When the sequence exceeds ``max_seq_len`` the prompt (context side) is
    right-truncated; the target is never cut.
    """
    prompt_ids = tokenizer.encode(prompt_override or example.prompt)
    target_ids = tokenizer.encode(example.target) + [tokenizer.eos_id]
    truncated = False
    budget = max_seq_len - len(target_ids)
    if budget < 1:
        raise SchemaError(
            f"target alone ({len(target_ids)} tokens) exceeds max_seq_len={max_seq_len}"
        )
    if len(prompt_ids) > budget:
        prompt_ids = prompt_ids[:budget]
        truncated = True
    input_ids = prompt_ids + target_ids
    labels = [IGNORE_INDEX] * len(prompt_ids) + list(target_ids)
    return EncodedExample(input_ids, labels, truncated)


def collate(batch: list[EncodedExample], pad_id: int) -> dict[str, torch.Tensor]:
    width = max(len(e.input_ids) for e in batch)
    input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
    labels = torch.full((len(batch), width), IGNORE_INDEX, dtype=torch.long)
    attention = torch.zeros((len(batch), width), dtype=torch.bool)
    for i, e in enumerate(batch):
        n = len(e.input_ids)
        input_ids[i, :n] = torch.tensor(e.input_ids, dtype=torch.long)
        labels[i, :n] = torch.tensor(e.labels, dtype=torch.long)
        attention[i, :n] = True
    return {"input_ids": input_ids, "labels": labels, "attention_mask": attention}
