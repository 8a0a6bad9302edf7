"""Single command-line entry point: generate, export, infer, eval, diversity,
report. Every run writes a manifest with content digests of its outputs.

Exit codes: 0 success, 1 user error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__, evaluate as ev, diversity as dv
from .config import ClientSettings, ConfigError, load_config, make_client
from .corpus import Corpus, export_training, load_corpus, split_holdout
from .genpipe import (
    CheckpointCorrupt,
    DOCS_FILE,
    Document,
    PipelineConfig,
    run_baseline,
    run_pipeline,
)
from .llm_client import ClientError
from .manifest import now_iso, verify_manifest, write_manifest
from .summarize import make_counter, summarize_long
from .textmatch import DEFAULT_OVERLAP_THRESHOLD, NORMALIZATION_VERSION

EXIT_OK, EXIT_USER, EXIT_RUNTIME = 0, 1, 2


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        print(f"error[usage]: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USER)


def _fail(code: str, message: str) -> None:
    print(f"error[{code}]: {message}", file=sys.stderr)


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        raise UserError(f"file not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except ValueError as exc:
                raise UserError(f"{path}:{i}: invalid JSON: {exc}") from exc
    return records


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


class ContextStore:
    """Resolves a run record's context reference to text: either a file in
    the context directory or a document id in its documents.jsonl."""

    def __init__(self, directory: Path) -> None:
        self.directory = directory
        self._docs: dict[str, Document] | None = None

    def _documents(self) -> dict[str, Document]:
        if self._docs is None:
            self._docs = {}
            docs_file = self.directory / DOCS_FILE
            if docs_file.exists():
                for rec in _read_jsonl(docs_file):
                    doc = Document.from_record(rec)
                    self._docs[doc.id] = doc
        return self._docs

    def get(self, ref: str) -> str:
        candidate = self.directory / ref
        if candidate.is_file():
            return candidate.read_text(encoding="utf-8")
        doc = self._documents().get(ref)
        if doc is not None:
            return "\n\n".join(doc.sections)
        raise UserError(f"context {ref!r} not found in {self.directory}")


def _pick(flag, config_section: dict, key: str, default):
    if flag is not None:
        return flag
    return config_section.get(key, default)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    started = now_iso()
    config = load_config(args.config)
    section = config.get("generate", {})
    settings = ClientSettings.resolve(config, model=args.model)
    cfg = PipelineConfig(
        n_documents=_pick(args.docs, section, "docs", 20),
        seed=_pick(args.seed, section, "seed", 0),
        section_count=_pick(args.sections, section, "section_count", 6),
        model=settings.model or "default",
    )
    client = make_client(settings, args.mock)
    out_dir = Path(args.out)
    if args.mode == "pipeline":
        result = run_pipeline(cfg, client, out_dir)
    else:
        result = run_baseline(cfg, client, out_dir, dedup_titles=(args.mode == "title-doc"))
    outputs = [result.documents_path, result.tuples_path, result.log_path,
               out_dir / "checkpoint.json"]
    inputs = [Path(p) for p in (args.mock, args.config) if p]
    write_manifest(
        out_dir, "generate", {**cfg.fingerprint(), "mode": args.mode}, cfg.seed,
        inputs, outputs, started, client.ledger.snapshot(), __version__,
    )
    print(
        f"generated {result.n_documents} documents, {result.n_tuples} tuples "
        f"({result.n_rejected} rejected) -> {out_dir}"
    )
    return EXIT_OK


def cmd_export(args) -> int:
    started = now_iso()
    corpus = load_corpus(args.in_dir)
    out_path = Path(args.out)
    outputs = [out_path]
    if args.holdout_docs:
        if not args.holdout_out:
            raise UserError("--holdout-docs requires --holdout-out")
        corpus, holdout = split_holdout(corpus, args.holdout_docs, args.seed)
        holdout_path = Path(args.holdout_out)
        n_holdout = export_training(holdout, args.shuffled, args.seed, holdout_path)
        outputs.append(holdout_path)
    n = export_training(corpus, args.shuffled, args.seed, out_path)
    write_manifest(
        out_path.parent, "export",
        {"shuffled": args.shuffled, "seed": args.seed, "in": str(args.in_dir),
         "holdout_docs": args.holdout_docs},
        args.seed, [], outputs, started, None, __version__,
    )
    msg = f"exported {n} training examples -> {out_path}"
    if args.holdout_docs:
        msg += f" (+{n_holdout} holdout -> {args.holdout_out})"
    print(msg)
    return EXIT_OK


def cmd_infer(args) -> int:
    started = now_iso()
    config = load_config(args.config)
    settings = ClientSettings.resolve(config, model=args.model)
    client = make_client(settings, args.mock)
    store = ContextStore(Path(args.context_dir))
    counter = make_counter(args.chars_per_token)
    records = []
    for i, q in enumerate(_read_jsonl(Path(args.question_file)), start=1):
        if "question" not in q or "context" not in q:
            raise UserError(
                f"{args.question_file}:{i}: question records need 'question' and 'context'"
            )
        context = store.get(q["context"])
        out = summarize_long(
            q["question"], context, client, budget=args.budget,
            max_attempts=args.max_attempts, model=settings.model, counter=counter,
        )
        records.append(
            {
                "question_id": q.get("question_id", q["question"][:40]),
                "context": q["context"],
                "evidence": out.evidence,
                "response": out.response,
                "chunked": out.chunked,
                "attempts": out.attempts_used,
                "degraded": out.degraded,
            }
        )
    out_path = Path(args.out)
    _write_jsonl(out_path, records)
    write_manifest(
        out_path.parent, "infer",
        {"budget": args.budget, "max_attempts": args.max_attempts},
        None, [Path(args.question_file)], [out_path], started,
        client.ledger.snapshot(), __version__,
    )
    print(f"wrote {len(records)} outputs -> {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    started = now_iso()
    run_path = Path(args.run)
    records = _read_jsonl(run_path)
    for i, r in enumerate(records, start=1):
        if "context" not in r or "evidence" not in r or "response" not in r:
            raise UserError(
                f"{run_path}:{i}: run records need 'context', 'evidence', and 'response'"
            )
    store = ContextStore(Path(args.contexts))
    contexts = [store.get(r["context"]) for r in records]

    copy_row = ev.copy_accuracy(records, contexts, args.overlap_threshold)
    hist = ev.position_histogram(records, contexts, args.bins, args.overlap_threshold)
    report: dict = {
        "run": str(run_path),
        "overlap_threshold": args.overlap_threshold,
        "normalization": NORMALIZATION_VERSION,
        "copy_accuracy": copy_row.as_dict(),
        "position_histogram": hist.as_dict(),
        "uniformity_pvalue": ev.uniformity_pvalue(hist),
    }

    if args.rater_config or args.rater_mock:
        rater_conf = load_config(args.rater_config)
        rater_settings = ClientSettings.resolve(rater_conf)
        rater_client = make_client(rater_settings, args.rater_mock)
        rcfg = ev.RaterConfig(model=rater_settings.model)
        report["citations"] = {}
        per_record: list[dict] = [dict() for _ in records]
        for dim in ev.DIMENSIONS:
            rater = ev.make_pair_rater(rater_client, dim, rcfg)
            reports = [
                ev.citation_prf1(r["response"], r["evidence"], rater, dim) for r in records
            ]
            for slot, rep in zip(per_record, reports):
                slot[dim] = rep.as_dict()
            agg = ev.aggregate_citation_reports(reports, seed=args.seed)
            report["citations"][dim] = agg.as_dict()
        report["per_record"] = per_record

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_json = out_dir / "report.json"
    report_json.write_text(
        json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    report_md = out_dir / "report.md"
    report_md.write_text(ev.render_markdown(report), encoding="utf-8")
    hist_csv = out_dir / "position_histogram.csv"
    with open(hist_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        writer.writerows(hist.csv_rows())
    write_manifest(
        out_dir, "eval",
        {"bins": args.bins, "overlap_threshold": args.overlap_threshold},
        args.seed, [run_path], [report_json, report_md, hist_csv], started,
        None, __version__,
    )
    print(
        f"copy accuracy: exact {copy_row.exact_rate:.2f}% / half {copy_row.half_match_rate:.2f}% "
        f"over {copy_row.n_evidence} items -> {out_dir}"
    )
    return EXIT_OK


def cmd_diversity(args) -> int:
    started = now_iso()
    corpus_path = Path(args.corpus)
    if corpus_path.is_dir():
        corpus = load_corpus(corpus_path)
        corpus_path = corpus_path / DOCS_FILE
    else:
        docs = [Document.from_record(r) for r in _read_jsonl(corpus_path)]
        corpus = Corpus(docs, [])
    if not corpus.documents:
        raise UserError(f"no documents in {corpus_path}")

    doc_texts = ["\n\n".join(d.sections) for d in corpus.documents]
    report: dict = {
        "params": {
            "k": args.k, "topn": args.topn, "iterations": args.iterations,
            "seed": args.seed, "min_count": args.min_count,
            "tokenization": "lowercase, split on non-alphanumerics, fixed stop list",
            "lda_scope": "corpus-level fit",
        },
        "documents": dv.lexical_stats(doc_texts).as_dict(),
    }
    if corpus.tuples:
        report["questions"] = dv.lexical_stats([t.question for t in corpus.tuples]).as_dict()
        report["summaries"] = dv.lexical_stats([t.summary for t in corpus.tuples]).as_dict()

    model = dv.lda_fit(
        doc_texts, k=args.k, iterations=args.iterations, seed=args.seed,
        min_count=args.min_count,
    )
    report["topic_diversity"] = dv.topic_diversity(model, args.topn)

    if args.mock or args.embeddings:
        config = load_config(args.config)
        settings = ClientSettings.resolve(config)
        client = make_client(settings, args.mock)
        report["embedding_dispersion"] = {
            "documents": dv.embedding_dispersion(doc_texts, client.embed)
        }
        if corpus.tuples:
            report["embedding_dispersion"]["summaries"] = dv.embedding_dispersion(
                [t.summary for t in corpus.tuples], client.embed
            )

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    write_manifest(
        out_path.parent, "diversity", report["params"], args.seed,
        [corpus_path], [out_path], started, None, __version__,
    )
    print(f"topic diversity {report['topic_diversity']:.3f} -> {out_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    problems = verify_manifest(run_dir)
    if problems:
        for p in problems:
            _fail("digest-mismatch", p)
        return EXIT_RUNTIME
    md = run_dir / "report.md"
    if md.exists():
        print(md.read_text(encoding="utf-8"))
    else:
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        print(json.dumps(manifest, indent=2))
    print("manifest verified: all output digests match")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sunset", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", parents=[], help="generate a synthetic corpus")
    p.add_argument("--docs", type=int, default=None, help="number of documents (default 20)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--sections", type=int, default=None, help="sections per document (default 6)")
    p.add_argument("--out", default="corpus", help="output directory")
    p.add_argument("--mock", default=None, help="JSONL of scripted replies (offline run)")
    p.add_argument("--config", default=None, help="TOML config file")
    p.add_argument("--model", default=None)
    p.add_argument(
        "--mode", choices=["pipeline", "non-pipelined", "title-doc"], default="pipeline",
        help="staged pipeline (default) or single-prompt baselines",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("export", help="export training examples from a corpus")
    p.add_argument("--in", dest="in_dir", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output JSONL file")
    p.add_argument("--shuffled", action="store_true", help="shuffle document sections")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout-docs", type=int, default=0,
                   help="hold out N documents into a separate file (200 at full scale)")
    p.add_argument("--holdout-out", default=None, help="holdout JSONL path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("infer", help="answer questions with extracted evidence")
    p.add_argument("--question-file", required=True)
    p.add_argument("--context-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, default=6000, help="context token budget per call")
    p.add_argument("--max-attempts", type=int, default=5)
    p.add_argument("--chars-per-token", type=float, default=4.0)
    p.add_argument("--mock", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--model", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate an inference run")
    p.add_argument("--run", required=True, help="run JSONL from `sunset infer`")
    p.add_argument("--contexts", required=True, help="context directory")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--rater-config", default=None, help="TOML config for the rater endpoint")
    p.add_argument("--rater-mock", default=None, help="JSONL of scripted rater replies")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--overlap-threshold", type=float, default=DEFAULT_OVERLAP_THRESHOLD)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diversity", help="corpus diversity metrics")
    p.add_argument("--corpus", required=True, help="corpus directory or documents JSONL")
    p.add_argument("--k", type=int, default=20, help="LDA topics (200 at full scale)")
    p.add_argument("--topn", type=int, default=25, help="top words per topic (200 at full scale)")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", action="store_true", help="also compute embedding dispersion")
    p.add_argument("--mock", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_diversity)

    p = sub.add_parser("report", help="verify a run directory and print its summary")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UserError, ConfigError) as exc:
        _fail("user", str(exc))
        return EXIT_USER
    except KeyboardInterrupt:
        _fail("interrupted", "run interrupted; re-run the same command to resume")
        return EXIT_RUNTIME
    except (ClientError, CheckpointCorrupt, OSError, ValueError, KeyError) as exc:
        _fail("runtime", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
