"""Command-line interface: subcommands, file outputs, exit codes."""

import json
import subprocess
import sys
from pathlib import Path

import pytest
from click.testing import CliRunner

from rolebot.cli import cli


@pytest.fixture()
def runner():
    return CliRunner()


def invoke(runner, *args):
    result = runner.invoke(cli, list(args), catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


class TestInitAndRun:
    def test_init_writes_runnable_config(self, runner, tmp_path):
        result = invoke(runner, "init", "--out-dir", str(tmp_path / "demo"))
        assert "config.yaml" in result.output
        for name in ("config.yaml", "fallback_questions.txt", "feedback_script.json"):
            assert (tmp_path / "demo" / name).exists()

    def test_run_single_stage(self, runner, tmp_path):
        invoke(runner, "init", "--out-dir", str(tmp_path))
        invoke(
            runner, "run", "--config", str(tmp_path / "config.yaml"),
            "--out-dir", str(tmp_path / "artifacts"), "--stage", "synthesize",
        )
        assert (tmp_path / "artifacts" / "generated.jsonl").exists()

    def test_missing_config_is_user_error(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "--config", str(tmp_path / "nope.yaml")])
        assert result.exit_code != 0


class TestSynthesize:
    def test_writes_deterministic_corpus(self, runner, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        invoke(runner, "synthesize", "--n", "6", "--seed", "3", "--out", str(a))
        invoke(runner, "synthesize", "--n", "6", "--seed", "3", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().strip().splitlines()) == 6


class TestFilterAndTrain:
    @pytest.fixture()
    def exported(self, runner, tmp_path):
        dialogues = tmp_path / "dialogues.jsonl"
        annotations = tmp_path / "annotations.jsonl"
        pos, neg = tmp_path / "pos.jsonl", tmp_path / "neg.jsonl"
        invoke(runner, "synthesize", "--n", "12", "--seed", "0", "--out", str(dialogues))
        invoke(runner, "filter", "auto-annotate", "--dialogues", str(dialogues),
               "--out", str(annotations))
        invoke(runner, "filter", "export", "--dialogues", str(dialogues),
               "--annotations", str(annotations),
               "--out-pos", str(pos), "--out-neg", str(neg))
        return pos, neg

    def test_export_produces_examples(self, exported):
        pos, neg = exported
        rows = [json.loads(l) for l in pos.read_text().splitlines()]
        assert rows and all(r["label"] == "positive" for r in rows)

    def test_train_each_model_kind(self, runner, tmp_path, exported):
        pos, neg = exported
        for kind in ("retriever", "reranker", "generator", "classifier"):
            out = tmp_path / f"{kind}.json"
            args = ["train", kind, "--pos", str(pos), "--epochs", "2",
                    "--out", str(out)]
            if kind in ("generator", "classifier"):
                args += ["--neg", str(neg)]
            invoke(runner, *args)
            assert json.loads(out.read_text())["kind"] == kind

    def test_eval_hits(self, runner, tmp_path, exported):
        pos, _ = exported
        model = tmp_path / "retriever.json"
        invoke(runner, "train", "retriever", "--pos", str(pos), "--epochs", "2",
               "--out", str(model))
        result = invoke(runner, "eval", "hits", "--pos", str(pos),
                        "--retriever", str(model), "--k", "3")
        assert "hits@1/3:" in result.output

    def test_stats(self, runner, tmp_path, exported):
        dialogues = tmp_path / "dialogues.jsonl"
        report_dir = tmp_path / "report"
        result = invoke(runner, "stats", "--dialogues", str(dialogues),
                        "--report-dir", str(report_dir))
        assert "dialogues: 12" in result.output
        assert list(report_dir.glob("*.csv")) and list(report_dir.glob("*.png"))


class TestEvalMetrics:
    def test_auc_and_threshold(self, runner, tmp_path):
        path = tmp_path / "scored.jsonl"
        rows = [
            {"score": 0.9, "label": "answerable"},
            {"score": 0.8, "label": "unanswerable"},
            {"score": 0.4, "label": "answerable"},
            {"score": 0.3, "label": "unanswerable"},
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        result = invoke(runner, "eval", "auc", "--in", str(path))
        assert "auc: 0.750000" in result.output
        result = invoke(runner, "eval", "threshold", "--in", str(path))
        assert "threshold:" in result.output and "f1:" in result.output

    def test_ssa_and_alpha(self, runner, tmp_path):
        path = tmp_path / "votes.jsonl"
        rows = [
            {"turn_ref": f"t{i}", "sensibleness_votes": [True] * 5,
             "specificity_votes": [True, True, True, False, False]}
            for i in range(4)
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        result = invoke(runner, "eval", "ssa", "--in", str(path))
        assert "sensibleness: 100.00" in result.output
        assert "specificity: 100.00" in result.output
        assert "ssa: 100.00" in result.output
        result = invoke(runner, "eval", "alpha", "--in", str(path),
                        "--dimension", "sensibleness")
        assert "alpha: 1.000000" in result.output


class TestExitCodes:
    def test_usage_error_exits_1(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rolebot.cli", "no-such-command"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1

    def test_bad_input_file_exits_1(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "rolebot.cli", "eval", "auc",
             "--in", str(tmp_path / "missing.jsonl")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 1

    def test_internal_error_exits_2(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json")
        proc = subprocess.run(
            [sys.executable, "-m", "rolebot.cli", "eval", "auc", "--in", str(bad)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2
