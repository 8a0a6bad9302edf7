import json
from collections import Counter

import pytest

from sunset.corpus import (
    Corpus,
    HoldoutTooLarge,
    build_context,
    export_training,
    load_corpus,
    save_corpus,
    shuffle_sections,
    split_holdout,
)
from sunset.genpipe import Document, Outline, QseTuple
from sunset.textmatch import match_evidence


def make_doc(i: int, n_sections: int = 6) -> Document:
    sections = [f"Section {s} of document {i} with passage {i}-{s} inside." for s in range(n_sections)]
    outline = Outline(f"Doc {i}", [(f"Ch {s}", f"sk {s}") for s in range(n_sections)])
    return Document(id=f"doc-{i:05d}", title=f"Doc {i}", outline=outline, sections=sections)


def make_corpus(n_docs: int = 4, tuples_per_doc: int = 2) -> Corpus:
    docs, tuples = [], []
    for i in range(n_docs):
        doc = make_doc(i)
        docs.append(doc)
        for t in range(tuples_per_doc):
            ev = [f"passage {i}-{(t + s) % len(doc.sections)}" for s in range(2)]
            tuples.append(
                QseTuple(doc.id, f"Q{t} about {i}?", f"Summary [{1}] and [{2}].", ev, True)
            )
    return Corpus(docs, tuples)


class TestShuffleSections:
    def test_single_section_identity(self):
        doc = make_doc(0, n_sections=1)
        out = shuffle_sections(doc, 99)
        assert out.sections == doc.sections
        assert out.id == "doc-00000-shuf99"

    def test_deterministic_per_seed(self):
        doc = make_doc(1)
        assert shuffle_sections(doc, 7).sections == shuffle_sections(doc, 7).sections

    def test_multiset_preserved(self):
        doc = make_doc(2)
        out = shuffle_sections(doc, 13)
        assert Counter(out.sections) == Counter(doc.sections)
        assert Counter(n for n, _ in out.outline.sections) == Counter(
            n for n, _ in doc.outline.sections
        )

    def test_outline_reordered_consistently(self):
        doc = make_doc(3)
        out = shuffle_sections(doc, 5)
        for (name, _), text in zip(out.outline.sections, out.sections):
            idx = [n for n, _ in doc.outline.sections].index(name)
            assert doc.sections[idx] == text


class TestSplitHoldout:
    def test_sizes_and_disjointness(self):
        corpus = make_corpus(10)
        train, hold = split_holdout(corpus, 2, seed=1)
        assert len(train.documents) == 8 and len(hold.documents) == 2
        train_ids = {d.id for d in train.documents}
        hold_ids = {d.id for d in hold.documents}
        assert not train_ids & hold_ids
        assert train_ids | hold_ids == {d.id for d in corpus.documents}
        assert all(t.document_id in hold_ids for t in hold.tuples)
        assert all(t.document_id in train_ids for t in train.tuples)

    def test_too_large(self):
        with pytest.raises(HoldoutTooLarge):
            split_holdout(make_corpus(10), 10, seed=0)

    def test_deterministic(self):
        corpus = make_corpus(10)
        a = split_holdout(corpus, 3, seed=42)
        b = split_holdout(corpus, 3, seed=42)
        assert [d.id for d in a[1].documents] == [d.id for d in b[1].documents]


class TestRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        corpus = make_corpus(3)
        save_corpus(corpus, tmp_path / "a")
        reloaded = load_corpus(tmp_path / "a")
        save_corpus(reloaded, tmp_path / "b")
        for name in ("documents.jsonl", "tuples.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestExportTraining:
    def test_one_example_per_tuple_same_context(self, tmp_path):
        corpus = make_corpus(1, tuples_per_doc=5)
        out = tmp_path / "train.jsonl"
        n = export_training(corpus, shuffled=False, seed=0, out_path=out)
        assert n == 5
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(records) == 5
        contexts = set()
        for r in records:
            assert r["target"].startswith("EVIDENCE:")
            assert r["target"].count("RESPONSE:") == 1
            assert r["meta"]["shuffled"] is False
            contexts.add(r["prompt"])
        # same document, unshuffled: identical context in all five prompts
        ctx_slices = {p.split("Here is the document: ", 1)[1] for p in contexts}
        assert len(ctx_slices) == 1

    def test_shuffled_export_evidence_still_found(self, tmp_path):
        corpus = make_corpus(4, tuples_per_doc=2)
        out = tmp_path / "train.jsonl"
        export_training(corpus, shuffled=True, seed=9, out_path=out)
        for line in out.read_text().splitlines():
            r = json.loads(line)
            context = r["prompt"].split("Here is the document: ", 1)[1].split("\n\n**OUTPUT FORMAT**")[0]
            body = r["target"].split("RESPONSE:", 1)[0]
            ev_lines = [
                l.split("] ", 1)[1]
                for l in body.splitlines()
                if l.startswith("[")
            ]
            assert ev_lines
            for ev in ev_lines:
                assert match_evidence(ev, context).exact

    def test_shuffled_context_is_permutation(self, tmp_path):
        corpus = make_corpus(2, tuples_per_doc=1)
        out = tmp_path / "train.jsonl"
        export_training(corpus, shuffled=True, seed=3, out_path=out)
        records = [json.loads(l) for l in out.read_text().splitlines()]
        for r, doc in zip(records, corpus.documents):
            context = r["prompt"].split("Here is the document: ", 1)[1].split("\n\n**OUTPUT FORMAT**")[0]
            assert Counter(context.split("\n\n")) == Counter(doc.sections)

    def test_empty_corpus_empty_file(self, tmp_path):
        out = tmp_path / "train.jsonl"
        assert export_training(Corpus(), shuffled=False, seed=0, out_path=out) == 0
        assert out.read_text() == ""

    def test_export_count_equals_tuple_count(self, tmp_path):
        corpus = make_corpus(3, tuples_per_doc=4)
        n = export_training(corpus, shuffled=False, seed=0, out_path=tmp_path / "t.jsonl")
        assert n == len(corpus.tuples) == 12

    def test_build_context_separator(self):
        doc = make_doc(0, n_sections=2)
        assert build_context(doc) == doc.sections[0] + "\n\n" + doc.sections[1]
