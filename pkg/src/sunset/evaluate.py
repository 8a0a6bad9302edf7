"""Quantitative evaluation: autorater scoring, citation precision/recall/F1,
evidence copy accuracy, positional histograms, bootstrap intervals, and score
correlation.

Citation scoring follows the sum-then-average scheme: every (sentence, cited
evidence) pair is rated, scores are normalized to [0, 100], and the sum is
divided by the citation count for precision and by the sentence count for
recall, so p * n_citations == r * n_sentences identically.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import prompts
from .genpipe import citation_indices
from .llm_client import LLMClient, user_request
from .textmatch import (
    DEFAULT_OVERLAP_THRESHOLD,
    Embedder,
    EmptyEvidence,
    _match_normalized,
    locate_reference_sentences,
    normalize,
    split_sentences,
)


class UnparseableScore(Exception):
    pass


class EmptySamples(ValueError):
    pass


class DegenerateInput(ValueError):
    pass


DIMENSIONS = ("relevance", "consistency")

_TEMPLATES = {
    ("relevance", True): prompts.RELEVANCE,
    ("relevance", False): prompts.RELEVANCE_NO_QUERY,
    ("consistency", True): prompts.CONSISTENCY,
    ("consistency", False): prompts.CONSISTENCY_NO_QUERY,
}


@dataclass(frozen=True)
class RaterScore:
    dimension: str
    raw: int
    normalized: float

    @classmethod
    def from_raw(cls, dimension: str, raw: int) -> "RaterScore":
        return cls(dimension, raw, (raw - 1) / 4 * 100.0)


@dataclass(frozen=True)
class RaterConfig:
    model: str = ""
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 64


_SCORE = re.compile(r"\b([1-5])\b")


def rate(
    client: LLMClient,
    source: str,
    target: str,
    query: str | None,
    dimension: str,
    config: RaterConfig = RaterConfig(),
) -> RaterScore:
    """Score target against source on one dimension (1..5 raw, 0..100
    normalized). One re-ask on an unparseable reply, then UnparseableScore."""
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown dimension {dimension!r}")
    template = _TEMPLATES[(dimension, query is not None)]
    prompt = prompts.fill(template, document=source, summary=target, query=query or "")
    req = user_request(
        config.model,
        prompt,
        temperature=config.temperature,
        top_p=config.top_p,
        max_tokens=config.max_tokens,
    )
    for _ in range(2):
        reply = client.complete(req).content
        m = _SCORE.search(reply)
        if m:
            return RaterScore.from_raw(dimension, int(m.group(1)))
    raise UnparseableScore(f"no score in rater reply: {reply!r}")


PairRater = Callable[[str, str], RaterScore]


def make_pair_rater(
    client: LLMClient, dimension: str, config: RaterConfig = RaterConfig()
) -> PairRater:
    """Rater for (evidence, citing sentence) pairs; the query slot is removed."""

    def rater(source: str, target: str) -> RaterScore:
        return rate(client, source, target, None, dimension, config)

    return rater


@dataclass
class CitationReport:
    dimension: str
    precision: float
    recall: float
    f1: float
    n_citations: int
    n_sentences: int
    ci95: dict[str, tuple[float, float]] | None = None

    def as_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_citations": self.n_citations,
            "n_sentences": self.n_sentences,
        }
        if self.ci95 is not None:
            out["ci95"] = {k: list(v) for k, v in self.ci95.items()}
        return out


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def citation_prf1(
    summary: str, evidence: Sequence[str], rater: PairRater, dimension: str
) -> CitationReport:
    """Per-summary citation quality.

    Every citation instance is scored (repeats are repeated claims);
    out-of-range indices score 0 but still count as citations.
    """
    sentences = split_sentences(summary)
    n_sentences = len(sentences)
    n_citations = 0
    total = 0.0
    for sent in sentences:
        for k in citation_indices(sent.text):
            n_citations += 1
            if 1 <= k <= len(evidence):
                total += rater(evidence[k - 1], sent.text).normalized
    precision = total / n_citations if n_citations else 0.0
    recall = total / n_sentences if n_sentences else 0.0
    return CitationReport(dimension, precision, recall, _f1(precision, recall),
                          n_citations, n_sentences)


def aggregate_citation_reports(
    reports: Sequence[CitationReport], n_resamples: int = 10_000, seed: int = 0
) -> CitationReport:
    """Mean P/R/F1 across summaries with bootstrap 95% intervals."""
    if not reports:
        raise EmptySamples("no reports to aggregate")
    dim = reports[0].dimension
    ps = [r.precision for r in reports]
    rs = [r.recall for r in reports]
    f1s = [r.f1 for r in reports]
    ci = {
        "precision": bootstrap_ci(ps, n_resamples, seed),
        "recall": bootstrap_ci(rs, n_resamples, seed + 1),
        "f1": bootstrap_ci(f1s, n_resamples, seed + 2),
    }
    return CitationReport(
        dim,
        float(np.mean(ps)),
        float(np.mean(rs)),
        float(np.mean(f1s)),
        sum(r.n_citations for r in reports),
        sum(r.n_sentences for r in reports),
        ci,
    )


@dataclass
class CopyAccuracyRow:
    exact_rate: float
    half_match_rate: float
    n_evidence: int
    undefined: bool = False

    def as_dict(self) -> dict:
        return {
            "exact_rate": self.exact_rate,
            "half_match_rate": self.half_match_rate,
            "n_evidence": self.n_evidence,
            "undefined": self.undefined,
        }


def _evidence_of(out) -> Sequence[str]:
    if isinstance(out, dict):
        return out["evidence"]
    if hasattr(out, "evidence"):
        return out.evidence
    return out


def _iter_matches(outputs, contexts, threshold):
    """Yield an EvidenceMatch per evidence item, normalizing each context once."""
    for out, context in zip(outputs, contexts):
        evidence = _evidence_of(out)
        ctx_norm = normalize(context)
        for ev in evidence:
            ev_norm = normalize(ev)
            if not ev_norm or not ctx_norm:
                raise EmptyEvidence("empty evidence or context in evaluation input")
            yield _match_normalized(ev_norm, ctx_norm, threshold)


def copy_accuracy(
    outputs: Sequence, contexts: Sequence[str], threshold: float = DEFAULT_OVERLAP_THRESHOLD
) -> CopyAccuracyRow:
    """Share of evidence items copied exactly and at >= threshold LCS overlap."""
    n = exact = half = 0
    for m in _iter_matches(outputs, contexts, threshold):
        n += 1
        exact += m.exact
        half += m.overlap >= threshold
    if n == 0:
        return CopyAccuracyRow(0.0, 0.0, 0, undefined=True)
    return CopyAccuracyRow(100.0 * exact / n, 100.0 * half / n, n)


@dataclass
class PositionHistogram:
    bin_count: int
    counts: list[int]
    total_matched: int
    total_unmatched: int

    def csv_rows(self) -> list[tuple[float, float, int]]:
        width = 1.0 / self.bin_count
        return [(i * width, (i + 1) * width, c) for i, c in enumerate(self.counts)]

    def as_dict(self) -> dict:
        return {
            "bin_count": self.bin_count,
            "counts": list(self.counts),
            "total_matched": self.total_matched,
            "total_unmatched": self.total_unmatched,
        }


def _bin_positions(positions: Sequence[float], bins: int, unmatched: int) -> PositionHistogram:
    counts = [0] * bins
    for pos in positions:
        counts[min(int(pos * bins), bins - 1)] += 1
    return PositionHistogram(bins, counts, len(positions), unmatched)


def position_histogram(
    outputs: Sequence,
    contexts: Sequence[str],
    bins: int = 10,
    threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> PositionHistogram:
    """Relative locations of matched evidence, equal-width bins over [0, 1];
    position 1.0 lands in the last bin, unmatched items are tallied aside."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    positions = []
    unmatched = 0
    for m in _iter_matches(outputs, contexts, threshold):
        if m.matched and m.relative_position is not None:
            positions.append(m.relative_position)
        else:
            unmatched += 1
    return _bin_positions(positions, bins, unmatched)


def reference_histogram(
    reference_summaries: Sequence[str],
    contexts: Sequence[str],
    embedder: Embedder,
    bins: int = 10,
) -> PositionHistogram:
    """Positions of reference-summary sentences located by embedding
    similarity; gives the ground-truth location distribution."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    positions: list[float] = []
    for ref, context in zip(reference_summaries, contexts):
        positions.extend(locate_reference_sentences(ref, context, embedder))
    return _bin_positions(positions, bins, 0)


def uniformity_pvalue(hist: PositionHistogram) -> float:
    """Chi-square p-value against the uniform distribution over bins."""
    if hist.total_matched == 0:
        return 1.0
    return float(stats.chisquare(hist.counts).pvalue)


def bootstrap_ci(
    samples: Sequence[float], n_resamples: int = 10_000, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap 95% interval for the mean; deterministic per seed."""
    if len(samples) == 0:
        raise EmptySamples("bootstrap over empty sample list")
    arr = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(n_resamples, arr.size))
    means = arr[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return float(lo), float(hi)


def render_markdown(report: dict) -> str:
    """Human-readable summary of an evaluation report dict."""
    lines = ["# Evaluation report", ""]
    if "run" in report:
        lines += [f"Run: `{report['run']}`", ""]
    copy = report.get("copy_accuracy")
    if copy:
        lines += [
            "## Copy accuracy",
            "",
            "| exact rate | half-match rate | evidence items |",
            "|---:|---:|---:|",
            f"| {copy['exact_rate']:.2f}% | {copy['half_match_rate']:.2f}% | {copy['n_evidence']} |",
            "",
        ]
        if copy.get("undefined"):
            lines += ["No evidence items were produced; rates reported as 0.", ""]
    hist = report.get("position_histogram")
    if hist:
        lines += ["## Evidence position distribution", ""]
        lines += ["| bin | count |", "|---|---:|"]
        width = 1.0 / hist["bin_count"]
        for i, c in enumerate(hist["counts"]):
            lines.append(f"| {i * width:.1f}-{(i + 1) * width:.1f} | {c} |")
        lines += [
            "",
            f"Matched {hist['total_matched']}, unmatched {hist['total_unmatched']}; "
            f"uniformity chi-square p = {report.get('uniformity_pvalue', float('nan')):.4f}",
            "",
        ]
    citations = report.get("citations")
    if citations:
        lines += ["## Citation quality", ""]
        lines += ["| dimension | precision | recall | F1 | 95% CI (F1) |", "|---|---:|---:|---:|---|"]
        for dim, agg in citations.items():
            ci = agg.get("ci95", {}).get("f1")
            ci_txt = f"[{ci[0]:.1f}, {ci[1]:.1f}]" if ci else "-"
            lines.append(
                f"| {dim} | {agg['precision']:.2f} | {agg['recall']:.2f} | {agg['f1']:.2f} | {ci_txt} |"
            )
        lines.append("")
    if "normalization" in report:
        lines += [f"Text normalization version: `{report['normalization']}`", ""]
    return "\n".join(lines)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson product-moment correlation; exact +-1.0 on perfect linear data."""
    if len(x) != len(y):
        raise DegenerateInput("x and y must have equal length")
    if len(x) < 2:
        raise DegenerateInput("need at least two points")
    mx = math.fsum(x) / len(x)
    my = math.fsum(y) / len(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise DegenerateInput("zero variance input")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))
