"""Inference orchestration: evidence-extraction prompting, structured-output
parsing, and divide-and-conquer summarization for over-long contexts."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

from . import prompts
from .genpipe import sanitize_citations
from .llm_client import LLMClient, user_request


class Misformatted(Exception):
    """Reply does not follow the EVIDENCE/RESPONSE output format."""


class ChunkOverflow(Exception):
    """A single unsplittable unit exceeds the chunk budget."""


DEFAULT_MAX_ATTEMPTS = 5

# Per-call cap requested in the prompt; enforced on parsed output too, so an
# n-chunk run merges at most 10n items.
EVIDENCE_CAP = 10


@dataclass
class SummaryOutput:
    evidence: list[str]
    response: str
    attempts_used: int
    chunked: bool
    degraded: bool = False


def build_prompt(question: str, context: str) -> str:
    """Instantiate the inference/training prompt. Substitution is single-pass,
    so placeholder-looking text inside the question or context stays literal."""
    return prompts.fill(prompts.GENERATION, question_text=question, context=context)


_EVIDENCE_HEAD = re.compile(r"(?im)^[ \t]*EVIDENCE[ \t]*:[ \t]*")
_RESPONSE_HEAD = re.compile(r"(?im)^[ \t]*RESPONSE[ \t]*:[ \t]*")
_ITEM_MARK = re.compile(r"^\[(\d+)\]\s*(.*)$")


def parse_output(raw: str) -> tuple[list[str], str]:
    """Split a reply into (evidence list, response).

    The first line-anchored EVIDENCE: and the first RESPONSE: after it bound
    the evidence block. Items are introduced by leading [k] markers; when no
    line carries a marker, each non-empty line is an item (indices assigned
    sequentially). Raises Misformatted so the caller can re-sample.
    """
    ev_m = _EVIDENCE_HEAD.search(raw)
    if ev_m is None:
        raise Misformatted("no EVIDENCE block")
    resp_m = _RESPONSE_HEAD.search(raw, ev_m.end())
    if resp_m is None:
        raise Misformatted("no RESPONSE block after EVIDENCE")
    block = raw[ev_m.end() : resp_m.start()]
    response = raw[resp_m.end() :].strip()
    if not response:
        raise Misformatted("empty response")

    lines = [ln.strip() for ln in block.splitlines() if ln.strip()]
    evidence: list[str] = []
    if any(_ITEM_MARK.match(ln) for ln in lines):
        current: list[str] = []
        for ln in lines:
            m = _ITEM_MARK.match(ln)
            if m:
                if current:
                    evidence.append(" ".join(current))
                current = [m.group(2).strip()] if m.group(2).strip() else []
            elif current:
                current.append(ln)
            else:
                current = [ln]
        if current:
            evidence.append(" ".join(current))
    else:
        evidence = lines
    return evidence, response


def generate(
    question: str,
    context: str,
    client: LLMClient,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    model: str = "",
) -> SummaryOutput:
    """Sample until the output parses or attempts run out; the final failure
    degrades to the raw last reply with no evidence rather than erroring."""
    prompt = build_prompt(question, context)
    last_raw = ""
    for attempt in range(1, max_attempts + 1):
        last_raw = client.complete(user_request(model, prompt)).content
        try:
            evidence, response = parse_output(last_raw)
        except Misformatted:
            continue
        evidence = evidence[:EVIDENCE_CAP]
        response, _ = sanitize_citations(response, len(evidence))
        return SummaryOutput(evidence, response, attempts_used=attempt, chunked=False)
    response, _ = sanitize_citations(last_raw.strip(), 0)
    return SummaryOutput([], response, attempts_used=max_attempts, chunked=False, degraded=True)


TokenCounter = Callable[[str], int]


def default_counter(text: str) -> int:
    """Cheap model-agnostic token estimate: ceil(chars / 4)."""
    return (len(text) + 3) // 4


def make_counter(chars_per_token: float) -> TokenCounter:
    def counter(text: str) -> int:
        return int(-(-len(text) // chars_per_token))

    return counter


_PARA_SPLIT = re.compile(r"(\n{2,})")


def _hard_split(unit: str, max_tokens: int, counter: TokenCounter) -> list[str]:
    """Split one oversized unit into budget-sized pieces, preserving content."""
    pieces = []
    rest = unit
    while rest:
        if counter(rest) <= max_tokens:
            pieces.append(rest)
            break
        lo, hi = 1, len(rest)
        while lo < hi:  # largest prefix within budget
            mid = (lo + hi + 1) // 2
            if counter(rest[:mid]) <= max_tokens:
                lo = mid
            else:
                hi = mid - 1
        if counter(rest[:lo]) > max_tokens:
            raise ChunkOverflow("single character exceeds token budget")
        pieces.append(rest[:lo])
        rest = rest[lo:]
    return pieces


def chunk_context(context: str, max_tokens: int, counter: TokenCounter = default_counter) -> list[str]:
    """Split a context into chunks whose token estimate fits the budget.

    Splits at paragraph boundaries where possible and hard-splits oversized
    paragraphs. Concatenating the chunks always reproduces the input exactly.
    """
    if max_tokens <= 0:
        raise ValueError("max_tokens must be positive")
    if not context or counter(context) <= max_tokens:
        return [context]

    parts = _PARA_SPLIT.split(context)
    units = []
    for i in range(0, len(parts), 2):
        unit = parts[i] + (parts[i + 1] if i + 1 < len(parts) else "")
        if unit:
            units.append(unit)

    chunks: list[str] = []
    current = ""
    for unit in units:
        if counter(current + unit) <= max_tokens:
            current += unit
            continue
        if current:
            chunks.append(current)
            current = ""
        if counter(unit) <= max_tokens:
            current = unit
        else:
            pieces = _hard_split(unit, max_tokens, counter)
            chunks.extend(pieces[:-1])
            current = pieces[-1]
    if current:
        chunks.append(current)
    assert "".join(chunks) == context
    return chunks


def _renumber(text: str, offset: int) -> str:
    if offset == 0:
        return text
    return re.sub(r"\[(\d+)\]", lambda m: f"[{int(m.group(1)) + offset}]", text)


def summarize_long(
    question: str,
    context: str,
    client: LLMClient,
    budget: int,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    model: str = "",
    counter: TokenCounter = default_counter,
) -> SummaryOutput:
    """Divide-and-conquer: per-chunk extraction, then one combination pass.

    Chunk i's local citation [k] becomes global [k + total evidence of earlier
    chunks]; the combiner sees the renumbered summaries plus the merged
    numbered evidence list, and its reply is sanitized against that list.
    """
    chunks = chunk_context(context, budget, counter)
    if len(chunks) == 1:
        return generate(question, context, client, max_attempts, model)

    outputs = [generate(question, chunk, client, max_attempts, model) for chunk in chunks]
    merged: list[str] = []
    renumbered: list[str] = []
    for out in outputs:
        renumbered.append(_renumber(out.response, len(merged)))
        merged.extend(out.evidence)

    combo_context = "\n\n".join(
        f"Summary {i + 1}:\n{text}" for i, text in enumerate(renumbered)
    )
    combo = prompts.fill(
        prompts.COMBINE_SUMMARIES,
        question_text=question,
        context=combo_context,
        evidence=prompts.format_numbered(merged),
    )
    reply = client.complete(user_request(model, combo)).content
    response, _ = sanitize_citations(reply.strip(), len(merged))
    return SummaryOutput(
        evidence=merged,
        response=response,
        attempts_used=sum(o.attempts_used for o in outputs) + 1,
        chunked=True,
        degraded=any(o.degraded for o in outputs),
    )
