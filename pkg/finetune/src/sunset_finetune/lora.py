"""Low-rank adapter injection over every linear operator of a model.

The base weights are frozen; each nn.Linear is wrapped so its output gets an
additive ``(alpha / rank) * B @ A @ x`` term. ``B`` starts at zero, so an
untrained adapter leaves the model's behavior unchanged.
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path

import torch
from torch import nn


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: int) -> None:
        super().__init__()
        self.base = base
        self.rank = rank
        self.alpha = alpha
        self.scaling = alpha / rank
        self.lora_a = nn.Parameter(torch.empty(rank, base.in_features))
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        for p in self.base.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + (x @ self.lora_a.T @ self.lora_b.T) * self.scaling


def inject_lora(model: nn.Module, rank: int, alpha: int) -> list[str]:
    """Replace every nn.Linear in the model with a LoRALinear wrapper and
    freeze all non-adapter parameters. Returns the wrapped module names."""
    targets: list[tuple[nn.Module, str, nn.Linear]] = []
    for name, module in model.named_modules():
        if isinstance(module, LoRALinear):
            continue
        for child_name, child in module.named_children():
            if isinstance(child, nn.Linear):
                targets.append((module, child_name, child))
    wrapped = []
    for parent, child_name, child in targets:
        setattr(parent, child_name, LoRALinear(child, rank, alpha))
    for name, module in model.named_modules():
        if isinstance(module, LoRALinear):
            wrapped.append(name)
    for name, param in model.named_parameters():
        if "lora_a" not in name and "lora_b" not in name:
            param.requires_grad_(False)
    return wrapped


def adapter_state(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: param.detach().clone()
        for name, param in model.named_parameters()
        if "lora_a" in name or "lora_b" in name
    }


def load_adapter_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    missing = model.load_state_dict(state, strict=False)
    unexpected = [k for k in missing.unexpected_keys]
    if unexpected:
        raise ValueError(f"unexpected adapter keys: {unexpected[:3]}")


def save_adapter(
    model: nn.Module, out_dir: str | Path, config: dict
) -> Path:
    """Write adapter weights and config atomically (temp file + rename)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    weights_tmp = out / "adapter_model.pt.tmp"
    torch.save(adapter_state(model), weights_tmp)
    os.replace(weights_tmp, out / "adapter_model.pt")
    config_tmp = out / "adapter_config.json.tmp"
    config_tmp.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    os.replace(config_tmp, out / "adapter_config.json")
    return out
