"""Base models and tokenizers.

Two paths: any Huggingface causal LM by id (lazy transformers import), or the
built-in byte-level tiny transformer for offline smoke runs and tests
(``base_model = "tiny"``).
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class ByteTokenizer:
    """Byte-level tokenizer: ids 0..255 are bytes, 256 EOS, 257 pad."""

    vocab_size = 258
    eos_id = 256
    pad_id = 257

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def decode(self, ids: list[int]) -> str:
        return bytes(i for i in ids if i < 256).decode("utf-8", errors="replace")


class _Block(nn.Module):
    """Pre-norm transformer block with explicit nn.Linear projections so
    adapter injection sees every linear operator."""

    def __init__(self, d_model: int, n_heads: int) -> None:
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.ln1 = nn.LayerNorm(d_model)
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.o_proj = nn.Linear(d_model, d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.up_proj = nn.Linear(d_model, 4 * d_model)
        self.down_proj = nn.Linear(4 * d_model, d_model)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        q = self.q_proj(h).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(h).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(h).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        att = att.masked_fill(mask[:, None, None, :] == 0, float("-inf"))
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=x.device))
        att = att.masked_fill(~causal, float("-inf"))
        att = torch.softmax(att, dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.o_proj(out)
        h = self.ln2(x)
        return x + self.down_proj(F.gelu(self.up_proj(h)))


class TinyLM(nn.Module):
    """Small causal byte LM (well under 100M parameters) for CPU smoke runs."""

    def __init__(
        self,
        vocab_size: int = ByteTokenizer.vocab_size,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        max_seq_len: int = 1024,
    ) -> None:
        super().__init__()
        self.max_seq_len = max_seq_len
        self.tok_emb = nn.Embedding(vocab_size, d_model)
        self.pos_emb = nn.Embedding(max_seq_len, d_model)
        self.blocks = nn.ModuleList(_Block(d_model, n_heads) for _ in range(n_layers))
        self.ln_f = nn.LayerNorm(d_model)
        self.lm_head = nn.Linear(d_model, vocab_size, bias=False)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor | None = None):
        b, t = input_ids.shape
        if attention_mask is None:
            attention_mask = torch.ones_like(input_ids, dtype=torch.bool)
        pos = torch.arange(t, device=input_ids.device)
        x = self.tok_emb(input_ids) + self.pos_emb(pos)[None]
        for block in self.blocks:
            x = block(x, attention_mask)
        return self.lm_head(self.ln_f(x))


def load_base(base_model: str):
    """Returns (model, tokenizer, forward_fn) for a model id.

    ``forward_fn(model, batch)`` must return logits of shape (B, T, V).
    """
    if base_model == "tiny" or base_model.startswith("tiny:"):
        kwargs = {}
        if ":" in base_model:
            for part in base_model.split(":", 1)[1].split(","):
                k, v = part.split("=")
                kwargs[k] = int(v)
        model = TinyLM(**kwargs)
        tokenizer = ByteTokenizer()

        def forward(m, batch):
            return m(batch["input_ids"], batch["attention_mask"])

        return model, tokenizer, forward

    from transformers import AutoModelForCausalLM, AutoTokenizer  # lazy; needs [hf] extra

    model = AutoModelForCausalLM.from_pretrained(base_model)
    tok = AutoTokenizer.from_pretrained(base_model)
    if tok.pad_token_id is None:
        tok.pad_token = tok.eos_token

    class _HfTok:
        eos_id = tok.eos_token_id
        pad_id = tok.pad_token_id

        @staticmethod
        def encode(text: str) -> list[int]:
            return tok.encode(text, add_special_tokens=False)

    def forward(m, batch):
        return m(
            input_ids=batch["input_ids"], attention_mask=batch["attention_mask"]
        ).logits

    return model, _HfTok(), forward
