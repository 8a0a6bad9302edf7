"""Toolkit for query-focused summarization over long documents with verbatim
evidence spans: synthetic corpus generation, training export, evidence-extracting
inference, and a quantitative evaluation suite."""

__version__ = "0.1.0"
