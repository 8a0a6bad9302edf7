"""LoRA supervised fine-tuning over exported prompt/target training examples."""

__version__ = "0.1.0"
