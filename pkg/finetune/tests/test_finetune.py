import json
import time
from collections import Counter
from pathlib import Path

import pytest
import torch

from sunset_finetune.cli import main
from sunset_finetune.data import (
    IGNORE_INDEX,
    SchemaError,
    check_document_disjoint,
    collate,
    encode_example,
    load_examples,
    reshuffle_context,
)
from sunset_finetune.lora import LoRALinear, adapter_state, inject_lora, save_adapter
from sunset_finetune.models import ByteTokenizer, TinyLM, load_base
from sunset_finetune.train import TrainConfig, train

PROMPT_HEAD = (
    "Your task is to read a document and then write an essay which addresses "
    "the following question: "
)


def example_record(doc: int, i: int) -> dict:
    context = (
        f"Section on topic {doc}-{i} where the sky turns amber at dusk.\n\n"
        f"Another section on {doc}-{i} where rivers carry silt to the delta."
    )
    prompt = (
        f"{PROMPT_HEAD}What happens in study {doc}-{i}?\n\n"
        f"Here is the document: {context}\n\n**OUTPUT FORMAT**\nOutput your response as:\n"
        "EVIDENCE:\n[1] Extracted passage 1\nRESPONSE:\nresponse"
    )
    target = (
        f"EVIDENCE:\n[1] the sky turns amber at dusk\n"
        f"RESPONSE:\nIn study {doc}-{i} the sky changes [1]."
    )
    return {
        "prompt": prompt,
        "target": target,
        "meta": {"document_id": f"doc-{doc:05d}", "shuffled": False, "seed": 0},
    }


def write_examples(path: Path, records: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
    return path


@pytest.fixture
def train_file(tmp_path):
    return write_examples(
        tmp_path / "train.jsonl", [example_record(d, i) for d in range(4) for i in range(2)]
    )


@pytest.fixture
def holdout_file(tmp_path):
    return write_examples(
        tmp_path / "holdout.jsonl", [example_record(d, 0) for d in range(10, 12)]
    )


FAST = dict(base_model="tiny:d_model=32,n_heads=2,n_layers=1", max_seq_len=640)


class TestData:
    def test_load_examples(self, train_file):
        examples = load_examples(train_file)
        assert len(examples) == 8
        assert examples[0].document_id == "doc-00000"
        assert examples[0].target.startswith("EVIDENCE:")

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(example_record(0, 0)) + "\n{not json\n")
        with pytest.raises(SchemaError, match=r"bad\.jsonl:2"):
            load_examples(path)

    def test_missing_meta_is_schema_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps({"prompt": "p", "target": "t"}) + "\n")
        with pytest.raises(SchemaError, match=r"bad\.jsonl:1"):
            load_examples(path)

    def test_disjointness_check(self, train_file, holdout_file):
        train_ex = load_examples(train_file)
        check_document_disjoint(train_ex, load_examples(holdout_file))
        with pytest.raises(SchemaError, match="leak"):
            check_document_disjoint(train_ex, train_ex[:1])

    def test_prompt_masked_target_not(self, train_file):
        ex = load_examples(train_file)[0]
        tok = ByteTokenizer()
        enc = encode_example(ex, tok, max_seq_len=2048)
        prompt_len = len(tok.encode(ex.prompt))
        assert enc.labels[:prompt_len] == [IGNORE_INDEX] * prompt_len
        assert enc.labels[prompt_len:] == enc.input_ids[prompt_len:]
        assert enc.input_ids[-1] == tok.eos_id
        assert not enc.truncated

    def test_truncation_cuts_prompt_never_target(self, train_file):
        ex = load_examples(train_file)[0]
        tok = ByteTokenizer()
        target_len = len(tok.encode(ex.target)) + 1
        enc = encode_example(ex, tok, max_seq_len=target_len + 10)
        assert enc.truncated
        assert len(enc.input_ids) == target_len + 10
        # the whole target survives at the tail
        assert enc.input_ids[-target_len:] == tok.encode(ex.target) + [tok.eos_id]

    def test_target_exceeding_window_is_schema_error(self, train_file):
        ex = load_examples(train_file)[0]
        with pytest.raises(SchemaError):
            encode_example(ex, ByteTokenizer(), max_seq_len=4)

    def test_collate_pads_and_masks(self):
        tok = ByteTokenizer()
        a = encode_example_like("ab", "cd", tok)
        b = encode_example_like("abcdef", "gh", tok)
        batch = collate([a, b], tok.pad_id)
        assert batch["input_ids"].shape == batch["labels"].shape
        assert bool(batch["attention_mask"][0, -1]) is False  # padding masked

    def test_reshuffle_context_preserves_blocks(self, train_file):
        import random

        ex = load_examples(train_file)[0]
        shuffled = reshuffle_context(ex.prompt, random.Random(1))
        orig_ctx = ex.prompt.split("Here is the document: ", 1)[1].split("\n\n**OUTPUT FORMAT**")[0]
        new_ctx = shuffled.split("Here is the document: ", 1)[1].split("\n\n**OUTPUT FORMAT**")[0]
        assert Counter(orig_ctx.split("\n\n")) == Counter(new_ctx.split("\n\n"))


def encode_example_like(prompt, target, tok):
    from sunset_finetune.data import TrainingExample

    return encode_example(TrainingExample(prompt, target, "d"), tok, 64)


class TestLora:
    def test_every_linear_wrapped_and_base_frozen(self):
        model = TinyLM(d_model=32, n_heads=2, n_layers=1)
        n_linear = sum(1 for m in model.modules() if isinstance(m, torch.nn.Linear))
        wrapped = inject_lora(model, rank=4, alpha=4)
        assert len(wrapped) == n_linear
        assert all(isinstance(m.base, torch.nn.Linear)
                   for m in model.modules() if isinstance(m, LoRALinear))
        for name, p in model.named_parameters():
            if "lora_" in name:
                assert p.requires_grad
            else:
                assert not p.requires_grad

    def test_zero_init_preserves_outputs(self):
        torch.manual_seed(0)
        model = TinyLM(d_model=32, n_heads=2, n_layers=1)
        ids = torch.randint(0, 258, (1, 12))
        before = model(ids)
        inject_lora(model, rank=4, alpha=4)
        after = model(ids)
        assert torch.allclose(before, after, atol=1e-6)

    def test_save_adapter_atomic_layout(self, tmp_path):
        model = TinyLM(d_model=32, n_heads=2, n_layers=1)
        inject_lora(model, rank=2, alpha=2)
        out = save_adapter(model, tmp_path / "adapter", {"rank": 2})
        assert (out / "adapter_model.pt").exists()
        assert json.loads((out / "adapter_config.json").read_text())["rank"] == 2
        state = torch.load(out / "adapter_model.pt", weights_only=True)
        assert all("lora_" in k for k in state)


class TestTrain:
    def test_epochs_zero_keeps_initialization(self, tmp_path, train_file):
        cfg = TrainConfig(epochs=0, **FAST)
        result = train(cfg, train_file, None, tmp_path / "run")
        assert result.steps == 0 and result.step_losses == []
        assert result.metrics_path.read_text() == ""
        state = torch.load(result.adapter_dir / "adapter_model.pt", weights_only=True)
        for key, tensor in state.items():
            if "lora_b" in key:
                assert torch.count_nonzero(tensor) == 0

    def test_same_seed_same_loss_sequence(self, tmp_path, train_file):
        cfg = TrainConfig(epochs=2, seed=7, **FAST)
        r1 = train(cfg, train_file, None, tmp_path / "a")
        r2 = train(cfg, train_file, None, tmp_path / "b")
        assert r1.step_losses == r2.step_losses

    def test_loss_decreases_with_aggressive_lr(self, tmp_path, train_file):
        cfg = TrainConfig(epochs=3, learning_rate=5e-3, warmup_steps=0, seed=1, **FAST)
        result = train(cfg, train_file, None, tmp_path / "run")
        k = 4
        assert sum(result.step_losses[-k:]) < sum(result.step_losses[:k])

    def test_holdout_logged_and_best_kept(self, tmp_path, train_file, holdout_file):
        cfg = TrainConfig(epochs=2, seed=3, **FAST)
        result = train(cfg, train_file, holdout_file, tmp_path / "run")
        assert len(result.holdout_losses) >= 1
        lines = [json.loads(l) for l in result.metrics_path.read_text().splitlines()]
        assert any("holdout_loss" in l for l in lines)

    def test_holdout_leak_raises(self, tmp_path, train_file):
        cfg = TrainConfig(epochs=1, **FAST)
        with pytest.raises(SchemaError, match="leak"):
            train(cfg, train_file, train_file, tmp_path / "run")


class TestCli:
    def test_config_driven_run(self, tmp_path, train_file, holdout_file, capsys):
        cfg = tmp_path / "train.toml"
        cfg.write_text(
            "[train]\n"
            f'base_model = "{FAST["base_model"]}"\n'
            f'train_file = "{train_file}"\n'
            f'holdout_file = "{holdout_file}"\n'
            f'out_dir = "{tmp_path / "run"}"\n'
            "epochs = 1\n"
            f"max_seq_len = {FAST['max_seq_len']}\n"
        )
        assert main(["--config", str(cfg)]) == 0
        assert "trained" in capsys.readouterr().out
        assert (tmp_path / "run" / "adapter" / "adapter_model.pt").exists()

    def test_schema_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        assert main(["--train-file", str(bad), "--epochs", "1"]) == 1
        assert "error[user]" in capsys.readouterr().err

    def test_missing_train_file_flagged(self, capsys):
        assert main([]) == 1
        assert "train_file" in capsys.readouterr().err


class TestAcceptanceSmoke:
    def test_eight_examples_one_epoch_cpu(self, tmp_path):
        """Finite loss at every step, holdout disjointness enforced, adapter
        written, well under the 10-minute CPU budget."""
        t0 = time.time()
        train_path = write_examples(
            tmp_path / "train.jsonl",
            [example_record(d, i) for d in range(4) for i in range(2)],  # 8 examples
        )
        holdout_path = write_examples(
            tmp_path / "holdout.jsonl", [example_record(d, 0) for d in range(20, 22)]
        )
        model = TinyLM()
        n_params = sum(p.numel() for p in model.parameters())
        assert n_params < 100_000_000  # sub-100M base model

        cfg = TrainConfig(epochs=1, seed=0)  # defaults: rank 16, alpha 16, lr 5e-5, batch 2
        result = train(cfg, train_path, holdout_path, tmp_path / "run")

        assert result.steps == 4  # 8 examples / batch 2
        assert result.step_losses and all(
            torch.isfinite(torch.tensor(l)) for l in result.step_losses
        )
        assert (result.adapter_dir / "adapter_model.pt").exists()
        assert (result.adapter_dir / "adapter_config.json").exists()
        assert len(result.holdout_losses) == 1

        with pytest.raises(SchemaError, match="leak"):
            train(cfg, train_path, train_path, tmp_path / "leaky")

        elapsed = time.time() - t0
        assert elapsed < 600, f"smoke took {elapsed:.0f}s"
        print(f"\nACCEPTANCE Finetune smoke (8 examples, 1 epoch, CPU): PASS ({elapsed:.1f}s)")
