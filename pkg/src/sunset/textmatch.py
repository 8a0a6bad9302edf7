"""Text normalization, sentence segmentation, and substring matching.

Everything here is pure and deterministic; these functions are the measurement
substrate for copy-accuracy and evidence-position analysis, so exact tie-break
rules matter and are spelled out on each function.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class EmptyEvidence(ValueError):
    """Evidence string is empty after normalization."""


DEFAULT_OVERLAP_THRESHOLD = 0.5

# Recorded in evaluation reports; bump when normalization behavior changes,
# since matching results depend on it.
NORMALIZATION_VERSION = "nfkc-quotes-dashes-ws/1"

# Typographic characters mapped to ASCII after NFKC (NFKC leaves quotes alone).
_CHAR_MAP = str.maketrans(
    {
        "‘": "'",
        "’": "'",
        "‚": "'",
        "‛": "'",
        "“": '"',
        "”": '"',
        "„": '"',
        "–": "-",
        "—": "-",
        "―": "-",
        "−": "-",
    }
)

_WS_RUN = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Canonicalize text for matching: NFKC, ASCII quotes/dashes, collapsed
    whitespace. Case is preserved (case errors are copy errors). Idempotent."""
    text = unicodedata.normalize("NFKC", text)
    text = text.translate(_CHAR_MAP)
    return _WS_RUN.sub(" ", text).strip()


# Words whose trailing period does not end a sentence.
_ABBREVIATIONS = frozenset(
    w.lower()
    for w in (
        "e.g", "i.e", "cf", "etc", "vs", "al", "et al",
        "Mr", "Mrs", "Ms", "Dr", "Prof", "Sr", "Jr", "St",
        "Fig", "Figs", "Eq", "Eqs", "No", "Nos", "Vol", "Ch", "Sec", "pp", "p",
        "approx", "dept", "Inc", "Ltd", "Co", "Corp",
    )
)

_BOUNDARY = re.compile(r"([.?!]+)(\s+)(?=[\"'“‘(\[]?[A-Z])")
_TRAILING_WORD = re.compile(r"([\w.]+)[.?!]+$")


def _is_protected(before: str) -> bool:
    """True when the text ending at a candidate boundary must not be split."""
    m = _TRAILING_WORD.search(before)
    if m is None:
        return False
    word = m.group(1)
    if word.lower().rstrip(".") in _ABBREVIATIONS or word.lower() in _ABBREVIATIONS:
        return True
    # Single capital initial, as in "J. Smith".
    if len(word) == 1 and word.isupper():
        return True
    # Decimal number followed by more digits would be inside a figure; a plain
    # "3.14." boundary is fine because the digits precede the final period.
    return False


@dataclass(frozen=True)
class Sentence:
    text: str
    start: int

    @property
    def end(self) -> int:
        return self.start + len(self.text)


def split_sentences(text: str) -> list[Sentence]:
    """Split on [.?!] runs followed by whitespace and an uppercase/quote opener,
    protected by an abbreviation list and initials. Offsets index the original
    text; sentences plus the whitespace gaps between them reconstruct it."""
    cuts: list[int] = []
    for m in _BOUNDARY.finditer(text):
        if _is_protected(text[: m.end(1)]):
            continue
        cuts.append(m.end(1))

    out: list[Sentence] = []
    seg_start = 0
    for cut in cuts + [len(text)]:
        raw = text[seg_start:cut]
        stripped = raw.strip()
        if stripped:
            out.append(Sentence(stripped, seg_start + (len(raw) - len(raw.lstrip()))))
        seg_start = cut
    return out


class _SuffixAutomaton:
    """Suffix automaton of a string; recognizes exactly its substrings."""

    __slots__ = ("next", "link", "length", "_last")

    def __init__(self, s: str) -> None:
        self.next: list[dict[str, int]] = [{}]
        self.link: list[int] = [-1]
        self.length: list[int] = [0]
        self._last = 0
        for ch in s:
            self._extend(ch)

    def _extend(self, ch: str) -> None:
        nxt, link, length = self.next, self.link, self.length
        cur = len(nxt)
        nxt.append({})
        link.append(-1)
        length.append(length[self._last] + 1)
        p = self._last
        while p != -1 and ch not in nxt[p]:
            nxt[p][ch] = cur
            p = link[p]
        if p == -1:
            link[cur] = 0
        else:
            q = nxt[p][ch]
            if length[p] + 1 == length[q]:
                link[cur] = q
            else:
                clone = len(nxt)
                nxt.append(dict(nxt[q]))
                link.append(link[q])
                length.append(length[p] + 1)
                while p != -1 and nxt[p].get(ch) == q:
                    nxt[p][ch] = clone
                    p = link[p]
                link[q] = clone
                link[cur] = clone
        self._last = cur


def longest_common_substring(a: str, b: str) -> tuple[int, int, int]:
    """Longest common contiguous substring of ``a`` and ``b``.

    Returns ``(length, offset_in_a, offset_in_b)``. Ties are broken by the
    smallest offset_in_b, then the smallest offset_in_a. The automaton is built
    over ``a`` and ``b`` is streamed through it, so cost is O(|a| + |b|);
    ``lcs_dp`` is the quadratic reference used to test this function.
    """
    if not a or not b:
        return (0, 0, 0)
    sam = _SuffixAutomaton(a)
    nxt, link, length = sam.next, sam.link, sam.length

    best_len = 0
    best_end_b = 0
    state = 0
    cur = 0
    for j, ch in enumerate(b):
        if ch in nxt[state]:
            state = nxt[state][ch]
            cur += 1
        else:
            while state != -1 and ch not in nxt[state]:
                state = link[state]
            if state == -1:
                state, cur = 0, 0
            else:
                cur = length[state] + 1
                state = nxt[state][ch]
        if cur > best_len:  # strict: first attainment keeps earliest end in b
            best_len = cur
            best_end_b = j
    if best_len == 0:
        return (0, 0, 0)
    off_b = best_end_b - best_len + 1
    off_a = a.find(b[off_b : off_b + best_len])
    return (best_len, off_a, off_b)


def lcs_dp(a: str, b: str) -> tuple[int, int, int]:
    """O(|a|*|b|) dynamic-programming reference for longest_common_substring,
    with the identical tie-break rule. Kept for testing; do not use on long
    inputs."""
    if not a or not b:
        return (0, 0, 0)
    bv = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    dp = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int32)
    for i, ch in enumerate(a):
        code = ord(ch)
        dp[i + 1, 1:] = np.where(bv == code, dp[i, :-1] + 1, 0)
    best = int(dp.max())
    if best == 0:
        return (0, 0, 0)
    ii, jj = np.nonzero(dp == best)
    offs_a = ii - best
    offs_b = jj - best
    order = np.lexsort((offs_a, offs_b))
    k = order[0]
    return (best, int(offs_a[k]), int(offs_b[k]))


@dataclass(frozen=True)
class EvidenceMatch:
    """Where (and how well) an evidence span occurs in a context.

    ``overlap`` is the LCS length over the normalized evidence length, so 1.0
    means the whole span was copied. ``relative_position`` is the matched-span
    midpoint divided by the normalized context length, defined only when
    ``matched`` (overlap >= threshold).
    """

    evidence_norm_len: int
    lcs_len: int
    overlap: float
    exact: bool
    context_offset: int
    relative_position: float | None
    matched: bool


def match_evidence(
    evidence: str,
    context: str,
    threshold: float = DEFAULT_OVERLAP_THRESHOLD,
) -> EvidenceMatch:
    """Locate ``evidence`` in ``context`` after normalizing both.

    Exact match (first occurrence) wins; otherwise the longest common substring
    is used. Positions below the overlap threshold are flagged unmatched.
    """
    if not context:
        raise ValueError("context must be non-empty")
    ev = normalize(evidence)
    if not ev:
        raise EmptyEvidence("evidence is empty after normalization")
    ctx = normalize(context)
    return _match_normalized(ev, ctx, threshold)


def _match_normalized(ev: str, ctx: str, threshold: float) -> EvidenceMatch:
    """Core of match_evidence for callers that pre-normalize the context."""
    idx = ctx.find(ev)
    if idx >= 0:
        lcs_len = len(ev)
        offset = idx
        exact = True
    else:
        lcs_len, _, offset = longest_common_substring(ev, ctx)
        exact = False
    overlap = lcs_len / len(ev)
    matched = overlap >= threshold
    rel = None
    if matched and len(ctx) > 0:
        rel = (offset + lcs_len / 2) / len(ctx)
    return EvidenceMatch(
        evidence_norm_len=len(ev),
        lcs_len=lcs_len,
        overlap=overlap,
        exact=exact,
        context_offset=offset if lcs_len else 0,
        relative_position=rel,
        matched=matched,
    )


Embedder = Callable[[Sequence[str]], list[list[float]]]


def locate_reference_sentences(
    reference_summary: str,
    context: str,
    embedder: Embedder,
) -> list[float]:
    """Relative position of each reference-summary sentence's nearest context
    sentence by embedding cosine similarity (ties go to the earliest sentence).
    """
    ref_sents = split_sentences(reference_summary)
    ctx_sents = split_sentences(context)
    if not ref_sents or not ctx_sents:
        return []
    vectors = embedder([s.text for s in ref_sents] + [s.text for s in ctx_sents])
    mat = np.asarray(vectors, dtype=float)
    ref_vecs = mat[: len(ref_sents)]
    ctx_vecs = mat[len(ref_sents) :]
    # Unit-normalize defensively; the client already normalizes.
    ref_vecs = ref_vecs / np.maximum(np.linalg.norm(ref_vecs, axis=1, keepdims=True), 1e-12)
    ctx_vecs = ctx_vecs / np.maximum(np.linalg.norm(ctx_vecs, axis=1, keepdims=True), 1e-12)
    sims = ref_vecs @ ctx_vecs.T
    total = len(context)
    positions = []
    for row in sims:
        k = int(np.argmax(row))  # argmax returns the first maximal index
        s = ctx_sents[k]
        positions.append((s.start + len(s.text) / 2) / total if total else 0.0)
    return positions
