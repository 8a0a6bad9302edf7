import json
import os

import pytest

from sunset.cli import main
from sunset.config import ClientSettings, make_client
from sunset.corpus import save_corpus, Corpus
from sunset.genpipe import Document, Outline

from pipeline_fixture import build_run_replies

GOOD_OUTPUT = "EVIDENCE:\n[1] tide rises at dusk\nRESPONSE:\nThe answer [1]."


def write_fixture(path, replies):
    with open(path, "w", encoding="utf-8") as fh:
        for r in replies:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


@pytest.fixture
def corpus_dir(tmp_path):
    fixture = tmp_path / "replies.jsonl"
    write_fixture(fixture, build_run_replies(2, seed=5))
    out = tmp_path / "corpus"
    code = main(["generate", "--docs", "2", "--seed", "5", "--mock", str(fixture), "--out", str(out)])
    assert code == 0
    return out


class TestBasics:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "usage" in capsys.readouterr().out.lower()

    def test_unknown_flag_exits_one(self, capsys):
        assert main(["generate", "--nonsense"]) == 1
        err = capsys.readouterr().err
        assert "usage" in err.lower()

    def test_missing_subcommand_exits_one(self):
        assert main([]) == 1

    def test_generate_without_endpoint_is_user_error(self, tmp_path, capsys):
        code = main(["generate", "--docs", "1", "--out", str(tmp_path / "x")])
        assert code == 1
        assert "error[user]" in capsys.readouterr().err


class TestGenerate:
    def test_two_document_corpus_with_manifest(self, corpus_dir):
        docs = (corpus_dir / "documents.jsonl").read_text().splitlines()
        tuples = (corpus_dir / "tuples.jsonl").read_text().splitlines()
        assert len(docs) == 2 and len(tuples) == 10
        manifest = json.loads((corpus_dir / "manifest.json").read_text())
        assert manifest["command"] == "generate"
        assert "documents.jsonl" in manifest["outputs"]

    def test_identical_runs_identical_digests(self, tmp_path):
        fixture = tmp_path / "replies.jsonl"
        write_fixture(fixture, build_run_replies(2, seed=5))
        for name in ("a", "b"):
            assert main([
                "generate", "--docs", "2", "--seed", "5",
                "--mock", str(fixture), "--out", str(tmp_path / name),
            ]) == 0
        m_a = json.loads((tmp_path / "a" / "manifest.json").read_text())["outputs"]
        m_b = json.loads((tmp_path / "b" / "manifest.json").read_text())["outputs"]
        assert m_a == m_b

    def test_mock_exhaustion_is_runtime_error(self, tmp_path, capsys):
        fixture = tmp_path / "replies.jsonl"
        write_fixture(fixture, build_run_replies(2, seed=5)[:10])
        code = main(["generate", "--docs", "2", "--seed", "5", "--mock", str(fixture),
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert "error[runtime]" in capsys.readouterr().err


class TestExport:
    def test_export_writes_examples(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "exports" / "train.jsonl"
        code = main(["export", "--in", str(corpus_dir), "--out", str(out), "--shuffled", "--seed", "3"])
        assert code == 0
        records = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(records) == 10
        assert all(r["meta"]["shuffled"] for r in records)
        assert (tmp_path / "exports" / "manifest.json").exists()

    def test_export_with_document_level_holdout(self, corpus_dir, tmp_path):
        out = tmp_path / "x" / "train.jsonl"
        hold = tmp_path / "x" / "holdout.jsonl"
        code = main(["export", "--in", str(corpus_dir), "--out", str(out),
                     "--holdout-docs", "1", "--holdout-out", str(hold)])
        assert code == 0
        train_docs = {json.loads(l)["meta"]["document_id"] for l in out.read_text().splitlines()}
        hold_docs = {json.loads(l)["meta"]["document_id"] for l in hold.read_text().splitlines()}
        assert hold_docs and not (train_docs & hold_docs)

    def test_holdout_needs_output_path(self, corpus_dir, tmp_path, capsys):
        code = main(["export", "--in", str(corpus_dir), "--out", str(tmp_path / "t.jsonl"),
                     "--holdout-docs", "1"])
        assert code == 1
        assert "holdout-out" in capsys.readouterr().err


class TestInferAndEval:
    CONTEXT = (
        "The ocean tide rises at dusk over the flats.\n\n"
        "Gulls wheel above the shallows hunting crabs.\n\n"
        "By dawn the water settles and the sand dries out."
    )

    def _infer(self, tmp_path):
        ctx_dir = tmp_path / "docs"
        ctx_dir.mkdir()
        (ctx_dir / "ctx.txt").write_text(self.CONTEXT)
        qfile = tmp_path / "q.jsonl"
        qfile.write_text(json.dumps({"question_id": "q1", "question": "When does the tide rise?",
                                     "context": "ctx.txt"}) + "\n")
        mock = tmp_path / "infer_mock.jsonl"
        write_fixture(mock, [GOOD_OUTPUT])
        run = tmp_path / "runs" / "r1.jsonl"
        code = main(["infer", "--question-file", str(qfile), "--context-dir", str(ctx_dir),
                     "--out", str(run), "--mock", str(mock)])
        assert code == 0
        return ctx_dir, run

    def test_infer_record_fields(self, tmp_path):
        _, run = self._infer(tmp_path)
        rec = json.loads(run.read_text().splitlines()[0])
        assert rec["question_id"] == "q1"
        assert rec["evidence"] == ["tide rises at dusk"]
        assert rec["response"] == "The answer [1]."
        assert rec["chunked"] is False and rec["degraded"] is False
        assert rec["attempts"] == 1

    def test_eval_offline_report(self, tmp_path):
        ctx_dir, run = self._infer(tmp_path)
        out = tmp_path / "reports"
        code = main(["eval", "--run", str(run), "--contexts", str(ctx_dir), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["copy_accuracy"]["exact_rate"] == 100.0
        assert report["copy_accuracy"]["n_evidence"] == 1
        assert sum(report["position_histogram"]["counts"]) == 1
        csv_text = (out / "position_histogram.csv").read_text().splitlines()
        assert csv_text[0] == "bin_lo,bin_hi,count"
        assert len(csv_text) == 11
        assert (out / "report.md").exists()

    def test_eval_with_rater_mock(self, tmp_path):
        ctx_dir, run = self._infer(tmp_path)
        rater_mock = tmp_path / "rater.jsonl"
        # one summary, 1 citation, 2 dimensions -> 2 rater calls
        write_fixture(rater_mock, ["5", "4"])
        out = tmp_path / "rated"
        code = main(["eval", "--run", str(run), "--contexts", str(ctx_dir),
                     "--out", str(out), "--rater-mock", str(rater_mock)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["citations"]["relevance"]["precision"] == 100.0
        assert report["citations"]["consistency"]["precision"] == 75.0
        assert "ci95" in report["citations"]["relevance"]

    def test_eval_byte_reproducible_with_scripted_rater(self, tmp_path):
        ctx_dir, run = self._infer(tmp_path)
        reports = []
        for name in ("r1", "r2"):
            rater_mock = tmp_path / f"rater-{name}.jsonl"
            write_fixture(rater_mock, ["5", "4"])
            out = tmp_path / name
            assert main(["eval", "--run", str(run), "--contexts", str(ctx_dir),
                         "--out", str(out), "--rater-mock", str(rater_mock)]) == 0
            reports.append((out / "report.json").read_bytes())
        assert reports[0] == reports[1]

    def test_report_verifies_and_detects_mutation(self, tmp_path, capsys):
        ctx_dir, run = self._infer(tmp_path)
        out = tmp_path / "reports"
        main(["eval", "--run", str(run), "--contexts", str(ctx_dir), "--out", str(out)])
        assert main(["report", "--run-dir", str(out)]) == 0
        assert "verified" in capsys.readouterr().out
        # mutate an output and verify detection
        path = out / "report.json"
        path.write_text(path.read_text() + " ")
        assert main(["report", "--run-dir", str(out)]) == 2
        assert "digest-mismatch" in capsys.readouterr().err


class TestDiversity:
    def test_diversity_on_generated_corpus(self, corpus_dir, tmp_path):
        out = tmp_path / "div.json"
        code = main(["diversity", "--corpus", str(corpus_dir), "--k", "2",
                     "--topn", "3", "--iterations", "10", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert 0.0 < report["documents"]["ttr"] <= 1.0
        assert "questions" in report and "summaries" in report
        assert 0.0 < report["topic_diversity"] <= 1.0
        assert report["params"]["k"] == 2

    def test_diversity_with_mock_embeddings(self, tmp_path):
        docs = [
            Document(f"d{i}", f"T{i}", Outline(f"T{i}", [("c", "s")]),
                     [f"unique words {i} repeated words {i} here now"])
            for i in range(3)
        ]
        corpus_dir = tmp_path / "c"
        save_corpus(Corpus(docs, []), corpus_dir)
        mock = tmp_path / "emb.jsonl"
        write_fixture(mock, [{"embedding": [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]}])
        out = tmp_path / "div.json"
        code = main(["diversity", "--corpus", str(corpus_dir), "--k", "2", "--topn", "2",
                     "--iterations", "5", "--out", str(out), "--mock", str(mock)])
        assert code == 0
        report = json.loads(out.read_text())
        # pairwise distances: (1,2)=1, (1,3)=0, (2,3)=1 -> mean 2/3
        assert report["embedding_dispersion"]["documents"] == pytest.approx(2 / 3)


class TestConfigLayering:
    def test_file_env_flag_precedence(self, tmp_path):
        cfg = {"client": {"base_url": "http://file", "model": "file-model", "api_key": "k-file"}}
        env = {"SUNSET_BASE_URL": "http://env"}
        settings = ClientSettings.resolve(cfg, env=env)
        assert settings.base_url == "http://env"          # env beats file
        assert settings.model == "file-model"             # file survives
        settings = ClientSettings.resolve(cfg, env=env, model="flag-model")
        assert settings.model == "flag-model"             # flag beats file
        assert settings.api_key == "k-file"

    def test_env_api_key(self):
        settings = ClientSettings.resolve({}, env={"SUNSET_API_KEY": "sk-env"})
        assert settings.api_key == "sk-env"

    def test_make_client_requires_endpoint(self):
        from sunset.config import ConfigError

        with pytest.raises(ConfigError):
            make_client(ClientSettings())
