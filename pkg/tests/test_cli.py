import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from legalrag.cli import cli
from legalrag.corpus import Label

from conftest import write_jsonl


def record(i, label, intro=None, question=None, answer=None, analysis="Because of rule {i}."):
    return {
        "id": f"r{i:03d}",
        "introduction": intro or f"Case background number {i} concerning civil procedure.",
        "question": question or f"Is motion {i} timely?",
        "answer_candidate": answer or f"Yes, motion {i} was filed within the deadline.",
        "analysis": analysis.format(i=i),
        "label": label,
    }


@pytest.fixture
def workspace(tmp_path: Path) -> Path:
    train = [record(i, "TRUE" if i % 2 == 0 else "FALSE") for i in range(8)]
    validation = [
        {k: v for k, v in record(100 + i, "TRUE" if i % 3 == 0 else "FALSE").items() if k != "analysis"}
        for i in range(5)
    ]
    shots = [record(900, "TRUE"), record(901, "FALSE")]
    write_jsonl(tmp_path / "train.jsonl", train)
    write_jsonl(tmp_path / "validation.jsonl", validation)
    write_jsonl(tmp_path / "shots.jsonl", shots)
    config = {
        "data": {"train": "train.jsonl", "validation": "validation.jsonl"},
        "embedding": {"kind": "builtin", "dim": 256},
        "chat": {"kind": "mock"},
        "fixed_shots": "shots.jsonl",
        "cache_dir": "cache",
        "output_dir": "out",
    }
    (tmp_path / "config.json").write_text(json.dumps(config, indent=2))
    return tmp_path


def run(workspace: Path, *args: str):
    runner = CliRunner()
    return runner.invoke(cli, [*args, "--config", str(workspace / "config.json")])


class TestSubcommands:
    def test_validate_data(self, workspace):
        result = run(workspace, "validate-data", "--split", "train")
        assert result.exit_code == 0
        assert "8 instances" in result.output

    def test_validate_data_reports_bad_file(self, workspace):
        (workspace / "train.jsonl").write_text('{"id": "x"}\n')
        result = run(workspace, "validate-data", "--split", "train")
        assert result.exit_code == 3

    def test_audit_leakage(self, workspace):
        result = run(workspace, "audit-leakage")
        assert result.exit_code == 0
        payload = json.loads((workspace / "out" / "leakage_validation.json").read_text())
        assert payload["overlap_count"] == 0

    def test_build_index(self, workspace):
        result = run(workspace, "build-index")
        assert result.exit_code == 0
        assert (workspace / "out" / "index.jsonl").exists()

    def test_predict_single_strategy_is_deterministic(self, workspace):
        result = run(workspace, "predict", "--strategy", "zero_shot")
        assert result.exit_code == 0
        path = workspace / "out" / "predictions_zero_shot.jsonl"
        first = path.read_bytes()
        assert len(first.strip().splitlines()) == 5
        result = run(workspace, "predict", "--strategy", "zero_shot")
        assert result.exit_code == 0
        assert path.read_bytes() == first

    def test_predict_unknown_strategy(self, workspace):
        result = run(workspace, "predict", "--strategy", "nonsense")
        assert result.exit_code == 2

    def test_full_pipeline(self, workspace):
        assert run(workspace, "predict-all").exit_code == 0
        assert run(workspace, "ensemble-vote").exit_code == 0
        assert run(workspace, "ensemble-search").exit_code == 0
        result = run(workspace, "score")
        assert result.exit_code == 0
        scores = (workspace / "out" / "scores.jsonl").read_text().strip().splitlines()
        # Six strategies plus the ensemble.
        assert len(scores) == 7
        report = run(workspace, "report")
        assert report.exit_code == 0
        assert "Macro F1" in report.output

    def test_ensemble_vote_without_predictions(self, workspace):
        result = run(workspace, "ensemble-vote")
        assert result.exit_code == 3

    def test_published_counts_reproduce_published_scores(self, workspace, tmp_path):
        # A prediction fixture whose confusion against gold is the published
        # (tn 57, fp 9, fn 3, tp 15) matrix.
        gold, preds = [], []
        spec = [("FALSE", "FALSE", 57), ("FALSE", "TRUE", 9), ("TRUE", "FALSE", 3), ("TRUE", "TRUE", 15)]
        k = 0
        for actual, predicted, count in spec:
            for _ in range(count):
                k += 1
                rec = record(k, actual)
                del rec["analysis"]
                gold.append(rec)
                preds.append(
                    {
                        "instance_id": rec["id"],
                        "strategy": "zero_shot",
                        "label": predicted,
                        "generated_analysis": None,
                        "retries_used": 0,
                        "parse_status": "clean",
                    }
                )

        write_jsonl(workspace / "validation.jsonl", gold)
        (workspace / "out").mkdir(exist_ok=True)
        write_jsonl(workspace / "out" / "predictions_zero_shot.jsonl", preds)
        result = run(workspace, "score")
        assert result.exit_code == 0
        row = json.loads((workspace / "out" / "scores.jsonl").read_text().splitlines()[0])
        assert row["macro_f1"] == pytest.approx(0.8095, abs=5e-4)
        assert row["accuracy"] == pytest.approx(0.8571, abs=5e-4)

    def test_baseline_windows(self, workspace):
        result = run(workspace, "baseline-windows")
        assert result.exit_code == 0
        lines = (workspace / "out" / "predictions_window_baseline.jsonl").read_text().strip().splitlines()
        assert len(lines) == 5
        assert all(json.loads(l)["label"] in ("TRUE", "FALSE") for l in lines)

    def test_missing_config(self, tmp_path):
        runner = CliRunner()
        result = runner.invoke(cli, ["validate-data", "--config", str(tmp_path / "no.json")])
        assert result.exit_code == 2

    def test_no_arguments_shows_usage(self):
        runner = CliRunner()
        result = runner.invoke(cli, [])
        assert result.exit_code != 0
        assert "Usage" in result.output

    def test_ensemble_search_with_holdout(self, workspace):
        assert run(workspace, "predict-all").exit_code == 0
        result = run(
            workspace,
            "ensemble-search",
            "--holdout-dir",
            str(workspace / "out"),
            "--holdout-split",
            "validation",
        )
        assert result.exit_code == 0
        first = json.loads((workspace / "out" / "ensemble_search.jsonl").read_text().splitlines()[0])
        assert "holdout_macro_f1" in first
        # Same predictions and gold on both sides -> identical scores.
        assert first["holdout_macro_f1"] == first["macro_f1"]
