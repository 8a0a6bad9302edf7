"""Six-stage document generation pipeline.

Stage order per document: outline, queries, summary+evidence drafts, section
writing (with verbatim-evidence repair), summary refinement plus citation
insertion, and a yes/no validation filter. Every released tuple's evidence is
guaranteed to occur verbatim in its assigned section: passages a section
misses are repaired by retrieval, falling back to the longest common
substring, or dropped and logged.

Runs are checkpointed at document boundaries and byte-identically resumable,
including against an ordered mock-reply fixture.
"""
from __future__ import annotations

import ast
import json
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from . import prompts
from .llm_client import LLMClient, user_request
from .textmatch import longest_common_substring, normalize


class PipelineError(Exception):
    """Recoverable per-item failure; the item is dropped and logged."""


class EmptyBatch(PipelineError):
    pass


class ParseFailure(PipelineError):
    pass


class WrongSectionCount(PipelineError):
    pass


class WrongCount(PipelineError):
    pass


class LengthMismatch(PipelineError):
    pass


class SectionEmpty(PipelineError):
    pass


class CheckpointCorrupt(Exception):
    """Checkpoint unreadable or inconsistent with the requested run; aborts."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class Outline:
    title: str
    sections: list[tuple[str, str]]  # (name, sketch), in document order

    def render(self) -> str:
        lines = [f"Title: {self.title}", ""]
        for i, (name, sketch) in enumerate(self.sections, start=1):
            lines.append(f"{i}. {name}: {sketch}")
        return "\n".join(lines)

    def to_record(self) -> dict:
        return {
            "title": self.title,
            "sections": [{"name": n, "sketch": s} for n, s in self.sections],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Outline":
        return cls(rec["title"], [(s["name"], s["sketch"]) for s in rec["sections"]])


@dataclass
class DraftQse:
    question: str
    summary: str
    evidence: list[str]
    chapters: list[int]  # 1-based section index per evidence item


@dataclass
class Document:
    id: str
    title: str
    outline: Outline
    sections: list[str]

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "outline": self.outline.to_record(),
            "sections": list(self.sections),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        return cls(rec["id"], rec["title"], Outline.from_record(rec["outline"]), list(rec["sections"]))


@dataclass
class QseTuple:
    document_id: str
    question: str
    summary: str
    evidence: list[str]
    validated: bool

    def to_record(self) -> dict:
        return {
            "document_id": self.document_id,
            "question": self.question,
            "summary": self.summary,
            "evidence": list(self.evidence),
            "validated": self.validated,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QseTuple":
        return cls(
            rec["document_id"], rec["question"], rec["summary"], list(rec["evidence"]), rec["validated"]
        )


@dataclass
class PipelineConfig:
    n_documents: int = 20
    seed: int = 0
    section_count: int = 6
    tuples_per_doc: int = 5
    evidence_min: int = 5
    evidence_max: int = 10
    parse_retries: int = 5
    title_batch: int = 100
    model: str = "default"
    temperature: float = 1.0
    top_p: float = 0.9
    max_tokens: int = 2000
    title_temperature: float = 1.2
    validate_temperature: float = 0.0

    def fingerprint(self) -> dict:
        return {
            "n_documents": self.n_documents,
            "seed": self.seed,
            "section_count": self.section_count,
            "tuples_per_doc": self.tuples_per_doc,
            "evidence_min": self.evidence_min,
            "evidence_max": self.evidence_max,
            "model": self.model,
        }


class PipelineLog:
    """JSON Lines event stream; also kept in memory for assertions."""

    def __init__(self, path: Path | None = None) -> None:
        self.path = path
        self.events: list[dict] = []
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def event(self, stage: str, document_id: str, event: str, detail: str = "") -> None:
        rec = {"stage": stage, "document_id": document_id, "event": event, "detail": detail}
        self.events.append(rec)
        if self._fh:
            self._fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


# ---------------------------------------------------------------------------
# Reply parsing helpers
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.S)
_ENUM_PREFIX = re.compile(r"^\s*(?:[-*•]+|\d+[.)])\s*")
CITATION = re.compile(r"\[(\d+)\]")


def extract_fenced(text: str) -> str | None:
    """Content of the first fenced code block, or None when there is none."""
    m = _FENCE.search(text)
    return m.group(1).strip() if m else None


def parse_json_object(text: str) -> dict:
    """Parse a JSON object from a model reply, tolerating code fences and
    Python-style single quotes."""
    candidates = []
    fenced = extract_fenced(text)
    if fenced:
        candidates.append(fenced)
    candidates.append(text.strip())
    start, end = text.find("{"), text.rfind("}")
    if 0 <= start < end:
        candidates.append(text[start : end + 1])
    for cand in candidates:
        for loads in (json.loads, ast.literal_eval):
            try:
                obj = loads(cand)
            except (ValueError, SyntaxError):
                continue
            if isinstance(obj, dict):
                return obj
    raise ParseFailure("no JSON object found in reply")


def split_lines(text: str) -> list[str]:
    """Non-empty trimmed lines with enumeration markers removed."""
    out = []
    for line in text.splitlines():
        line = _ENUM_PREFIX.sub("", line.strip()).strip()
        if line:
            out.append(line)
    return out


def sanitize_citations(text: str, n_evidence: int) -> tuple[str, list[int]]:
    """Strip [k] markers with k outside [1, n_evidence]; returns removed ks."""
    removed: list[int] = []

    def repl(m: re.Match) -> str:
        k = int(m.group(1))
        if 1 <= k <= n_evidence:
            return m.group(0)
        removed.append(k)
        return ""

    cleaned = re.sub(r" ?\[(\d+)\]", repl, text)
    return cleaned, removed


def citation_indices(text: str) -> list[int]:
    return [int(m.group(1)) for m in CITATION.finditer(text)]


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def _ask(client: LLMClient, cfg: PipelineConfig, prompt: str, temperature: float | None = None) -> str:
    req = user_request(
        cfg.model,
        prompt,
        temperature=cfg.temperature if temperature is None else temperature,
        top_p=cfg.top_p,
        max_tokens=cfg.max_tokens,
    )
    return client.complete(req).content


def gen_titles(client: LLMClient, cfg: PipelineConfig, n: int, prev: list[str]) -> list[str]:
    """One title batch; duplicates within the batch and against prev removed."""
    if n > 100:
        raise ValueError("at most 100 titles per call")
    prev_prompt = ""
    if prev:
        prev_prompt = prompts.NO_REPEAT_TITLES + "\n\n" + "\n".join(prev)
    prompt = prompts.fill(prompts.TITLES, n_titles=n, prev_titles_prompt=prev_prompt)
    reply = _ask(client, cfg, prompt, temperature=cfg.title_temperature)
    seen = set(prev)
    titles = []
    for line in split_lines(reply):
        if line not in seen:
            seen.add(line)
            titles.append(line)
    if not titles:
        raise EmptyBatch("no parseable titles in reply")
    return titles[:n]


def gen_outline(client: LLMClient, cfg: PipelineConfig, title: str) -> Outline:
    if not title:
        raise ValueError("title must be non-empty")
    prompt = prompts.fill(prompts.OUTLINE, title=title, n_sections=cfg.section_count)
    last: PipelineError = ParseFailure("no attempts made")
    for _ in range(cfg.parse_retries):
        reply = _ask(client, cfg, prompt)
        try:
            obj = parse_json_object(reply)
        except ParseFailure as exc:
            last = exc
            continue
        sections = [(str(k), str(v)) for k, v in obj.items()]
        if len(sections) != cfg.section_count:
            last = WrongSectionCount(
                f"expected {cfg.section_count} sections, got {len(sections)}"
            )
            continue
        return Outline(title=title, sections=sections)
    raise last


def gen_queries(client: LLMClient, cfg: PipelineConfig, outline: Outline) -> list[str]:
    prompt = prompts.fill(prompts.QUERIES, outline=outline.render())
    last: PipelineError = WrongCount("no attempts made")
    for _ in range(cfg.parse_retries):
        reply = _ask(client, cfg, prompt)
        questions = split_lines(reply)
        if len(questions) == cfg.tuples_per_doc:
            return questions
        last = WrongCount(f"expected {cfg.tuples_per_doc} questions, got {len(questions)}")
    raise last


def gen_summary_evidence(
    client: LLMClient, cfg: PipelineConfig, outline: Outline, question: str, n_evidence: int
) -> DraftQse:
    prompt = prompts.fill(
        prompts.SUMMARY_EVIDENCE, outline=outline.render(), question=question, n_evidence=n_evidence
    )
    last: PipelineError = ParseFailure("no attempts made")
    for _ in range(cfg.parse_retries):
        reply = _ask(client, cfg, prompt)
        try:
            return _parse_draft(reply, question, n_evidence, cfg.section_count)
        except PipelineError as exc:
            last = exc
    raise last


def _parse_draft(reply: str, question: str, n_evidence: int, section_count: int) -> DraftQse:
    obj = parse_json_object(reply)
    try:
        summary = str(obj["summary"])
        evidence = [str(e) for e in obj["evidence"]]
        chapters_raw = obj["chapter"]
    except (KeyError, TypeError) as exc:
        raise ParseFailure(f"missing field in summary/evidence reply: {exc}") from exc
    if not isinstance(chapters_raw, list):
        raise ParseFailure("chapter field is not a list")
    if len(evidence) != len(chapters_raw):
        raise LengthMismatch(
            f"{len(evidence)} evidence items vs {len(chapters_raw)} chapter assignments"
        )
    try:
        chapters = [int(str(c).strip().rstrip(".")) for c in chapters_raw]
    except ValueError as exc:
        raise ParseFailure(f"non-integer chapter value: {exc}") from exc
    for c in chapters:
        if not 1 <= c <= section_count:
            raise ParseFailure(f"chapter {c} out of range 1..{section_count}")
    if len(evidence) < n_evidence:
        raise ParseFailure(f"expected at least {n_evidence} evidence items, got {len(evidence)}")
    if not summary.strip() or any(not e.strip() for e in evidence):
        raise ParseFailure("empty summary or evidence item")
    return DraftQse(question=question, summary=summary, evidence=evidence, chapters=chapters)


def repair_evidence(
    client: LLMClient, cfg: PipelineConfig, section: str, missing_passage: str
) -> str | None:
    """Retrieve the closest passage that truly occurs in the section.

    Falls back to the longest common substring of (reply, section) when the
    model's reply is itself not verbatim; returns None when even that is empty
    (caller drops the passage).
    """
    prompt = prompts.fill(prompts.RETRIEVE_PASSAGE, chapter=section, passage=missing_passage)
    reply = _ask(client, cfg, prompt)
    candidate = extract_fenced(reply)
    if candidate is None:
        candidate = reply.strip()
    section_norm = normalize(section)
    cand_norm = normalize(candidate)
    if cand_norm and cand_norm in section_norm:
        return candidate
    length, _, off = longest_common_substring(cand_norm, section_norm)
    if length == 0:
        return None
    return section_norm[off : off + length]


# Outcome per required passage: "verbatim", a replacement string, or None.
SectionOutcome = list[Any]


def gen_section(
    client: LLMClient,
    cfg: PipelineConfig,
    outline: Outline,
    section_index: int,
    required_evidence: list[str],
    repair: Callable[[str, str], str | None] | None = None,
) -> tuple[str, SectionOutcome]:
    """Write one section and make every required passage verbatim-findable.

    Returns the section text plus, aligned with ``required_evidence``, either
    "verbatim", the repaired replacement string, or None for a dropped passage.
    """
    name, _ = outline.sections[section_index - 1]
    prompt = prompts.fill(
        prompts.SECTION,
        outline=outline.render(),
        chapter=name,
        evidence="\n\n".join(required_evidence),
    )
    text = ""
    for _ in range(cfg.parse_retries):
        reply = _ask(client, cfg, prompt)
        content = extract_fenced(reply)
        if content is None:
            content = reply.strip()
        if content:
            text = content
            break
    if not text:
        raise SectionEmpty(f"section {section_index} empty after retries")

    if repair is None:
        repair = lambda section, passage: repair_evidence(client, cfg, section, passage)

    section_norm = normalize(text)
    outcomes: SectionOutcome = []
    for passage in required_evidence:
        if normalize(passage) in section_norm:
            outcomes.append("verbatim")
        else:
            outcomes.append(repair(text, passage))
    return text, outcomes


def refine(
    client: LLMClient, cfg: PipelineConfig, book: str, question: str, summary: str, passages: list[str]
) -> str:
    prompt = prompts.fill(
        prompts.REFINE,
        book=book,
        question=question,
        summary=summary,
        passages=prompts.format_numbered(passages),
    )
    for attempt in (1, 2):
        reply = _ask(client, cfg, prompt)
        content = extract_fenced(reply)
        if content:
            return content
        if attempt == 2 and reply.strip():
            return reply.strip()  # lenient fallback after one retry
    raise ParseFailure("refinement reply empty")


def add_citances(
    client: LLMClient, cfg: PipelineConfig, summary: str, evidence: list[str]
) -> tuple[str, list[int]]:
    """Add [k] citations; out-of-range markers are stripped, never fatal."""
    prompt = prompts.fill(
        prompts.CITANCES, essay=summary, evidence=prompts.format_numbered(evidence)
    )
    reply = _ask(client, cfg, prompt).strip()
    fenced = extract_fenced(reply)
    if fenced:
        reply = fenced
    if not reply:
        return summary, []
    return sanitize_citations(reply, len(evidence))


def validate(client: LLMClient, cfg: PipelineConfig, book: str, question: str, summary: str) -> bool:
    prompt = prompts.fill(prompts.VALIDATE, book=book, question=question, summary=summary)
    reply = _ask(client, cfg, prompt, temperature=cfg.validate_temperature)
    return reply.strip().upper().startswith("YES")


# ---------------------------------------------------------------------------
# Full run with checkpointing
# ---------------------------------------------------------------------------

DOCS_FILE = "documents.jsonl"
TUPLES_FILE = "tuples.jsonl"
LOG_FILE = "pipeline_log.jsonl"
CHECKPOINT_FILE = "checkpoint.json"

SECTION_JOIN = "\n\n"


@dataclass
class PipelineResult:
    out_dir: Path
    documents_path: Path
    tuples_path: Path
    log_path: Path
    n_documents: int = 0
    n_tuples: int = 0
    n_rejected: int = 0


def _doc_rng(seed: int, index: int) -> random.Random:
    return random.Random(f"{seed}:{index}")


def _load_checkpoint(path: Path, cfg: PipelineConfig) -> dict | None:
    if not path.exists():
        return None
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise CheckpointCorrupt(f"unreadable checkpoint {path}: {exc}") from exc
    required = {"version", "fingerprint", "titles", "docs_done", "mock_cursor", "offsets"}
    if not required.issubset(state):
        raise CheckpointCorrupt(f"checkpoint {path} missing fields")
    if state["fingerprint"] != cfg.fingerprint():
        raise CheckpointCorrupt("checkpoint belongs to a different configuration")
    return state


def _write_checkpoint(path: Path, cfg: PipelineConfig, titles: list[str], docs_done: int,
                      cursor: int, offsets: dict) -> None:
    state = {
        "version": 1,
        "fingerprint": cfg.fingerprint(),
        "titles": titles,
        "docs_done": docs_done,
        "mock_cursor": cursor,
        "offsets": offsets,
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(state, ensure_ascii=False), encoding="utf-8")
    tmp.replace(path)


def _truncate(path: Path, size: int) -> None:
    if path.exists():
        with open(path, "r+b") as fh:
            fh.truncate(size)
    elif size == 0:
        path.touch()


def _generate_document(
    client: LLMClient, cfg: PipelineConfig, doc_id: str, title: str, rng: random.Random,
    log: PipelineLog,
) -> tuple[Document, list[QseTuple], int]:
    """Run stages 2..6 for one document. Returns (doc, kept tuples, rejected)."""
    outline = gen_outline(client, cfg, title)
    questions = gen_queries(client, cfg, outline)

    drafts: list[DraftQse] = []
    for q in questions:
        n_ev = rng.randint(cfg.evidence_min, cfg.evidence_max)
        try:
            drafts.append(gen_summary_evidence(client, cfg, outline, q, n_ev))
        except PipelineError as exc:
            log.event("summary_evidence", doc_id, "tuple_dropped", str(exc))

    # Which draft/evidence slots each section must include, in draft order.
    sections: list[str] = []
    dropped: set[tuple[int, int]] = set()
    for s_idx in range(1, cfg.section_count + 1):
        slots = [
            (d_i, e_i)
            for d_i, d in enumerate(drafts)
            for e_i, ch in enumerate(d.chapters)
            if ch == s_idx
        ]
        required = [drafts[d_i].evidence[e_i] for d_i, e_i in slots]
        text, outcomes = gen_section(client, cfg, outline, s_idx, required)
        for (d_i, e_i), outcome in zip(slots, outcomes):
            if outcome == "verbatim":
                continue
            if outcome is None:
                dropped.add((d_i, e_i))
                log.event("section", doc_id, "evidence_dropped",
                          f"section {s_idx}: no overlap for required passage")
            else:
                drafts[d_i].evidence[e_i] = outcome
                log.event("section", doc_id, "evidence_repaired", f"section {s_idx}")
        sections.append(text)

    # Apply drops and defensively re-check the verbatim invariant.
    norm_sections = [normalize(s) for s in sections]
    for d_i, d in enumerate(drafts):
        kept_ev, kept_ch = [], []
        for e_i, (ev, ch) in enumerate(zip(d.evidence, d.chapters)):
            if (d_i, e_i) in dropped:
                continue
            if normalize(ev) not in norm_sections[ch - 1]:
                log.event("section", doc_id, "evidence_dropped",
                          f"post-repair check failed in section {ch}")
                continue
            kept_ev.append(ev)
            kept_ch.append(ch)
        d.evidence, d.chapters = kept_ev, kept_ch

    book = SECTION_JOIN.join(sections)
    kept: list[QseTuple] = []
    rejected = 0
    for d in drafts:
        if not d.evidence:
            log.event("refine", doc_id, "tuple_dropped", "no evidence left after drops")
            rejected += 1
            continue
        try:
            refined = refine(client, cfg, book, d.question, d.summary, d.evidence)
        except PipelineError as exc:
            log.event("refine", doc_id, "tuple_dropped", str(exc))
            rejected += 1
            continue
        cited, removed = add_citances(client, cfg, refined, d.evidence)
        for k in removed:
            log.event("citances", doc_id, "citation_stripped", f"[{k}] out of range")
        if validate(client, cfg, book, d.question, cited):
            kept.append(QseTuple(doc_id, d.question, cited, list(d.evidence), True))
        else:
            log.event("validate", doc_id, "tuple_rejected", "validator answered NO")
            rejected += 1
    doc = Document(id=doc_id, title=title, outline=outline, sections=sections)
    return doc, kept, rejected


def run_pipeline(cfg: PipelineConfig, client: LLMClient, out_dir: str | Path) -> PipelineResult:
    """Generate the corpus, checkpointing after every document boundary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs_path, tuples_path = out / DOCS_FILE, out / TUPLES_FILE
    log_path, ckpt_path = out / LOG_FILE, out / CHECKPOINT_FILE

    state = _load_checkpoint(ckpt_path, cfg)
    if state is not None:
        titles = list(state["titles"])
        docs_done = int(state["docs_done"])
        offsets = dict(state["offsets"])
        _truncate(docs_path, offsets["documents"])
        _truncate(tuples_path, offsets["tuples"])
        _truncate(log_path, offsets["log"])
        skip = getattr(client.transport, "skip", None)
        if skip is not None:
            consumed = getattr(client.transport, "consumed", 0)
            skip(int(state["mock_cursor"]) - consumed)
    else:
        titles = []
        docs_done = 0
        offsets = {"documents": 0, "tuples": 0, "log": 0}
        for p in (docs_path, tuples_path, log_path):
            _truncate(p, 0)
        ckpt_path.unlink(missing_ok=True)

    log = PipelineLog(log_path)
    result = PipelineResult(out, docs_path, tuples_path, log_path)

    def cursor() -> int:
        return int(getattr(client.transport, "consumed", 0))

    try:
        empty_batches = 0
        while len(titles) < cfg.n_documents:
            batch = min(cfg.title_batch, 100)
            try:
                titles.extend(gen_titles(client, cfg, batch, titles))
            except EmptyBatch:
                empty_batches += 1
                if empty_batches >= cfg.parse_retries:
                    raise
        titles = titles[: cfg.n_documents]
        if state is None:
            _write_checkpoint(ckpt_path, cfg, titles, docs_done, cursor(), offsets)

        with open(docs_path, "a", encoding="utf-8") as docs_fh, open(
            tuples_path, "a", encoding="utf-8"
        ) as tuples_fh:
            for i in range(docs_done, cfg.n_documents):
                doc_id = f"doc-{i:05d}"
                rng = _doc_rng(cfg.seed, i)
                try:
                    doc, kept, rejected = _generate_document(
                        client, cfg, doc_id, titles[i], rng, log
                    )
                except PipelineError as exc:
                    log.event("document", doc_id, "document_dropped", str(exc))
                    doc = None
                    kept, rejected = [], 0
                if doc is not None:
                    docs_fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
                    for t in kept:
                        tuples_fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")
                    docs_fh.flush()
                    tuples_fh.flush()
                    result.n_documents += 1
                    result.n_tuples += len(kept)
                result.n_rejected += rejected
                offsets = {
                    "documents": docs_fh.tell(),
                    "tuples": tuples_fh.tell(),
                    "log": log_path.stat().st_size,
                }
                _write_checkpoint(ckpt_path, cfg, titles, i + 1, cursor(), offsets)
    finally:
        log.close()
    return result


# ---------------------------------------------------------------------------
# Single-prompt baseline generators (diversity comparison only)
# ---------------------------------------------------------------------------


def run_baseline(
    cfg: PipelineConfig, client: LLMClient, out_dir: str | Path, dedup_titles: bool = False
) -> PipelineResult:
    """One-prompt-per-document generator. Documents land as a single section
    and tuples are unvalidated; useful only for the diversity comparison."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs_path, tuples_path, log_path = out / DOCS_FILE, out / TUPLES_FILE, out / LOG_FILE
    log = PipelineLog(log_path)
    result = PipelineResult(out, docs_path, tuples_path, log_path)
    prev_titles: list[str] = []
    with open(docs_path, "w", encoding="utf-8") as docs_fh, open(
        tuples_path, "w", encoding="utf-8"
    ) as tuples_fh:
        for i in range(cfg.n_documents):
            doc_id = f"doc-{i:05d}"
            title_prompt = ""
            if dedup_titles and prev_titles:
                title_prompt = prompts.NO_REPEAT_TITLES + "\n" + "\n".join(prev_titles)
            prompt = prompts.fill(
                prompts.BASELINE_SINGLE_PROMPT,
                title_prompt=title_prompt,
                n_sections=cfg.section_count,
            )
            obj = None
            for _ in range(cfg.parse_retries):
                reply = _ask(client, cfg, prompt)
                try:
                    obj = parse_json_object(reply)
                    break
                except ParseFailure:
                    continue
            if obj is None:
                log.event("baseline", doc_id, "document_dropped", "unparseable reply")
                continue
            try:
                title = str(obj["title"])
                outline_text = str(obj.get("outline", ""))
                questions = [str(q) for q in obj["questions"]]
                summaries = [str(s) for s in obj["summaries"]]
                body = str(obj["document"])
                evidence = obj.get("evidence", [])
            except (KeyError, TypeError) as exc:
                log.event("baseline", doc_id, "document_dropped", f"missing field: {exc}")
                continue
            prev_titles.append(title)
            doc = Document(
                id=doc_id,
                title=title,
                outline=Outline(title, [("Document", outline_text)]),
                sections=[body],
            )
            docs_fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")
            result.n_documents += 1
            for q, s, ev in zip(questions, summaries, list(evidence) + [[]] * len(questions)):
                ev_list = [str(e) for e in ev] if isinstance(ev, list) else [str(ev)]
                t = QseTuple(doc_id, q, s, [e for e in ev_list if e.strip()], False)
                tuples_fh.write(json.dumps(t.to_record(), ensure_ascii=False) + "\n")
                result.n_tuples += 1
    log.close()
    return result
