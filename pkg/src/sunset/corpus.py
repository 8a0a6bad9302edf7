"""Corpus persistence, section-shuffle augmentation, holdout splitting, and
training-example export."""
from __future__ import annotations

import json
import random
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from . import prompts
from .genpipe import DOCS_FILE, SECTION_JOIN, TUPLES_FILE, Document, QseTuple


class HoldoutTooLarge(ValueError):
    pass


@dataclass
class Corpus:
    documents: list[Document] = field(default_factory=list)
    tuples: list[QseTuple] = field(default_factory=list)

    def tuples_for(self, document_id: str) -> list[QseTuple]:
        return [t for t in self.tuples if t.document_id == document_id]

    def document(self, document_id: str) -> Document:
        for d in self.documents:
            if d.id == document_id:
                return d
        raise KeyError(document_id)


def _read_jsonl(path: Path) -> list[dict]:
    records = []
    if not path.exists():
        return records
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def load_corpus(directory: str | Path) -> Corpus:
    d = Path(directory)
    docs = [Document.from_record(r) for r in _read_jsonl(d / DOCS_FILE)]
    tuples = [QseTuple.from_record(r) for r in _read_jsonl(d / TUPLES_FILE)]
    return Corpus(docs, tuples)


def save_corpus(corpus: Corpus, directory: str | Path) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    docs_path, tuples_path = d / DOCS_FILE, d / TUPLES_FILE
    with open(docs_path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
    with open(tuples_path, "w", encoding="utf-8") as fh:
        for t in corpus.tuples:
            fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")
    return docs_path, tuples_path


def shuffle_sections(doc: Document, seed: int) -> Document:
    """Deterministic section permutation; outline reordered consistently and
    the id suffixed with the shuffle seed."""
    perm = list(range(len(doc.sections)))
    random.Random(seed).shuffle(perm)
    return Document(
        id=f"{doc.id}-shuf{seed}",
        title=doc.title,
        outline=type(doc.outline)(
            title=doc.outline.title,
            sections=[doc.outline.sections[i] for i in perm],
        ),
        sections=[doc.sections[i] for i in perm],
    )


def split_holdout(corpus: Corpus, n_holdout: int, seed: int) -> tuple[Corpus, Corpus]:
    """Document-level split: no document's tuples straddle the boundary."""
    n_docs = len(corpus.documents)
    if n_holdout >= n_docs:
        raise HoldoutTooLarge(f"holdout of {n_holdout} from {n_docs} documents")
    rng = random.Random(seed)
    holdout_idx = set(rng.sample(range(n_docs), n_holdout))
    train_docs, holdout_docs = [], []
    for i, doc in enumerate(corpus.documents):
        (holdout_docs if i in holdout_idx else train_docs).append(doc)
    holdout_ids = {d.id for d in holdout_docs}
    train_tuples = [t for t in corpus.tuples if t.document_id not in holdout_ids]
    holdout_tuples = [t for t in corpus.tuples if t.document_id in holdout_ids]
    return Corpus(train_docs, train_tuples), Corpus(holdout_docs, holdout_tuples)


def _doc_shuffle_seed(seed: int, document_id: str) -> int:
    # Stable per-document seed so one export seed yields one fixed shuffle
    # per document.
    return zlib.crc32(f"{seed}:{document_id}".encode("utf-8"))


def build_context(doc: Document) -> str:
    return SECTION_JOIN.join(doc.sections)


def render_target(t: QseTuple) -> str:
    return "EVIDENCE:\n" + prompts.format_numbered(t.evidence) + "\nRESPONSE:\n" + t.summary


def export_training(
    corpus: Corpus, shuffled: bool, seed: int, out_path: str | Path
) -> int:
    """Write one TrainingExample per tuple; returns the number written.

    The context is the concatenation of the document's sections (optionally
    shuffled, one fixed permutation per document and seed) and the target
    reconstructs the numbered evidence list followed by the cited summary.
    """
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            view = shuffle_sections(doc, _doc_shuffle_seed(seed, doc.id)) if shuffled else doc
            context = build_context(view)
            for t in corpus.tuples_for(doc.id):
                record = {
                    "prompt": prompts.fill(
                        prompts.GENERATION, question_text=t.question, context=context
                    ),
                    "target": render_target(t),
                    "meta": {"document_id": doc.id, "shuffled": shuffled, "seed": seed},
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                count += 1
    return count
