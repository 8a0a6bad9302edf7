"""Corpus diversity metrics: type-token ratio, embedding dispersion, and
LDA-based topic diversity via a collapsed Gibbs sampler.

Tokenization here is intentionally simple and recorded with every report:
lowercase, split on non-alphanumerics; the LDA path additionally drops a fixed
stop list and words occurring fewer than ``min_count`` times in the corpus.
"""
from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .textmatch import Embedder


class TooFewTexts(ValueError):
    pass


class CorpusTooSmall(ValueError):
    pass


_TOKEN = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    """a about above after again against all along already also although always am among an and another any anybody
    anyone anything are around as at away back be became because become becomes been before began behind being
    below between both but by came can cannot case certain certainly come comes could day did do does doing done
    down during each either else enough even ever every everybody everyone everything far few find first for from
    further gave get gets give given goes going gone got great had has have having he her here hers herself high
    him himself his how however i if in indeed instead into is it its itself just keep kind knew know known large
    last later least left less let like likely little long look looked looking made make makes many may me men
    might more most mostly much must my myself near need never new next no nobody none nor not nothing now of off
    often old on once one only onto or other others our ours ourselves out over own part per perhaps place put
    quite rather really right said same saw say says second see seem seemed seems seen several shall she should
    show side since small so some somebody someone something sometimes somewhat somewhere still such sure take
    taken than that the their theirs them themselves then there therefore these they thing things think this those
    though three through thus time to together too took toward turn two under until up upon us use used uses very
    want wants was way we well went were what when where whether which while who whole whom whose why will with
    within without would yes yet you your yours yourself""".split()
)


def word_tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class LexicalStats:
    ttr: float
    mean_len_words: float
    n_texts: int
    n_skipped: int

    def as_dict(self) -> dict:
        return {
            "ttr": self.ttr,
            "mean_len_words": self.mean_len_words,
            "n_texts": self.n_texts,
            "n_skipped": self.n_skipped,
        }


def lexical_stats(texts: Sequence[str]) -> LexicalStats:
    """Average per-text type-token ratio and mean length in word tokens.
    Texts with no tokens are excluded and counted in ``n_skipped``."""
    if not texts:
        raise ValueError("texts must be non-empty")
    ttrs, lens = [], []
    skipped = 0
    for text in texts:
        tokens = word_tokens(text)
        if not tokens:
            skipped += 1
            continue
        ttrs.append(len(set(tokens)) / len(tokens))
        lens.append(len(tokens))
    if not ttrs:
        raise ValueError("every text was empty after tokenization")
    return LexicalStats(
        ttr=float(np.mean(ttrs)),
        mean_len_words=float(np.mean(lens)),
        n_texts=len(ttrs),
        n_skipped=skipped,
    )


def embedding_dispersion(texts: Sequence[str], embedder: Embedder) -> float:
    """Mean over unordered pairs of (1 - cosine similarity); 0 iff all
    embeddings are identical, at most 2."""
    if len(texts) < 2:
        raise TooFewTexts("need at least two texts")
    mat = np.asarray(embedder(list(texts)), dtype=float)
    mat = mat / np.maximum(np.linalg.norm(mat, axis=1, keepdims=True), 1e-12)
    sims = mat @ mat.T
    iu = np.triu_indices(len(texts), k=1)
    return float(np.mean(1.0 - sims[iu]))


@dataclass
class LdaModel:
    k_topics: int
    vocabulary: list[str]
    topic_word_counts: np.ndarray  # (k, |V|) non-negative ints
    alpha: float
    beta: float
    seed: int
    iterations: int

    def top_words(self, topic: int, n: int) -> list[str]:
        counts = self.topic_word_counts[topic]
        # descending count, ties by vocabulary order
        order = np.lexsort((np.arange(len(counts)), -counts))
        return [self.vocabulary[i] for i in order[:n]]


def lda_fit(
    docs: Sequence[str],
    k: int,
    iterations: int = 200,
    alpha: float | None = None,
    beta: float = 0.01,
    seed: int = 0,
    min_count: int = 2,
    stopwords: frozenset[str] = STOPWORDS,
) -> LdaModel:
    """Collapsed Gibbs sampling over bag-of-words; deterministic under seed.

    Words below ``min_count`` corpus occurrences and stop words are dropped.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if alpha is None:
        alpha = 50.0 / k
    tokenized = [word_tokens(d) for d in docs]
    counts: dict[str, int] = {}
    for tokens in tokenized:
        for w in tokens:
            if w not in stopwords:
                counts[w] = counts.get(w, 0) + 1
    vocabulary = sorted(w for w, c in counts.items() if c >= min_count)
    word_id = {w: i for i, w in enumerate(vocabulary)}
    doc_ids = [[word_id[w] for w in tokens if w in word_id] for tokens in tokenized]
    doc_ids = [d for d in doc_ids if d]
    total_tokens = sum(len(d) for d in doc_ids)
    if not vocabulary or total_tokens <= k:
        raise CorpusTooSmall(
            f"{total_tokens} usable tokens over {len(vocabulary)} words for k={k}"
        )

    v_size = len(vocabulary)
    rng = random.Random(seed)
    n_kt = [[0] * v_size for _ in range(k)]
    n_k = [0] * k
    n_dk = [[0] * k for _ in doc_ids]
    z: list[list[int]] = []
    for d, ids in enumerate(doc_ids):
        zs = []
        for t in ids:
            topic = rng.randrange(k)
            zs.append(topic)
            n_kt[topic][t] += 1
            n_k[topic] += 1
            n_dk[d][topic] += 1
        z.append(zs)

    beta_v = beta * v_size
    topics = range(k)
    for _ in range(iterations):
        for d, ids in enumerate(doc_ids):
            zs = z[d]
            dk = n_dk[d]
            for pos, t in enumerate(ids):
                old = zs[pos]
                n_kt[old][t] -= 1
                n_k[old] -= 1
                dk[old] -= 1
                cum = 0.0
                weights = []
                for kk in topics:
                    cum += (dk[kk] + alpha) * (n_kt[kk][t] + beta) / (n_k[kk] + beta_v)
                    weights.append(cum)
                u = rng.random() * cum
                new = 0
                while weights[new] < u:
                    new += 1
                zs[pos] = new
                n_kt[new][t] += 1
                n_k[new] += 1
                dk[new] += 1

    return LdaModel(
        k_topics=k,
        vocabulary=vocabulary,
        topic_word_counts=np.asarray(n_kt, dtype=np.int64),
        alpha=alpha,
        beta=beta,
        seed=seed,
        iterations=iterations,
    )


def topic_diversity(model: LdaModel, top_n: int) -> float:
    """Unique words across per-topic top-``top_n`` lists over the maximum
    possible (k * top_n); 1.0 means fully disjoint topics."""
    if top_n > len(model.vocabulary):
        raise ValueError("top_n exceeds vocabulary size")
    union: set[str] = set()
    for t in range(model.k_topics):
        union.update(model.top_words(t, top_n))
    return len(union) / (model.k_topics * top_n)
