"""Tests for the command-line interface."""

import json
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from logit_shift.errors import ConvergenceError
from logit_shift.main import cli
from logit_shift.verify import PropertyCheck


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scores_csv(tmp_path):
    path = tmp_path / "scores.csv"
    path.write_text("id,score\na,0.2\nb,0.8\n")
    return path


class TestRecalibrate:
    def test_both_methods(self, runner, scores_csv, tmp_path):
        out = tmp_path / "out.csv"
        diag = tmp_path / "diag.csv"
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores_csv),
                "--total",
                "1",
                "--method",
                "both",
                "--output",
                str(out),
                "--diagnostics",
                str(diag),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "id,score,recalibrated,posterior"
        assert lines[1].startswith("a,0.2,0.2,0.0588235294")
        assert lines[2].startswith("b,0.8,0.8,0.9411764706")
        assert diag.read_text().startswith("group,n,target,alpha")

    def test_identical_runs_identical_output(self, runner, scores_csv, tmp_path):
        args = ["recalibrate", "--input", str(scores_csv), "--total", "1.3"]
        runner.invoke(cli, [*args, "--output", str(tmp_path / "a.csv")])
        runner.invoke(cli, [*args, "--output", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_targets_file(self, runner, tmp_path):
        scores = tmp_path / "s.csv"
        scores.write_text("group,score\nx,0.1\nx,0.4\ny,0.6\ny,0.7\n")
        targets = tmp_path / "t.csv"
        targets.write_text("group,total\nx,1\ny,1\n")
        out = tmp_path / "out.csv"
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores),
                "--targets",
                str(targets),
                "--output",
                str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.read_text().splitlines()[0] == "group,score,recalibrated"

    def test_score_of_one_is_data_error(self, runner, tmp_path):
        scores = tmp_path / "s.csv"
        scores.write_text("score\n0.5\n1.0\n")
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores),
                "--total",
                "1",
                "--output",
                str(tmp_path / "out.csv"),
            ],
        )
        assert result.exit_code == 2
        assert not (tmp_path / "out.csv").exists()

    def test_clamp_flag_accepts_boundary_scores(self, runner, tmp_path):
        scores = tmp_path / "s.csv"
        scores.write_text("score\n0.5\n1.0\n0.3\n")
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores),
                "--total",
                "2",
                "--clamp-epsilon",
                "1e-9",
                "--output",
                str(tmp_path / "out.csv"),
            ],
        )
        assert result.exit_code == 0, result.output

    def test_infeasible_total_is_data_error(self, runner, scores_csv, tmp_path):
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores_csv),
                "--total",
                "2",
                "--output",
                str(tmp_path / "out.csv"),
            ],
        )
        assert result.exit_code == 2

    def test_total_and_targets_together_is_usage_error(
        self, runner, scores_csv, tmp_path
    ):
        targets = tmp_path / "t.csv"
        targets.write_text("group,total\nx,1\n")
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores_csv),
                "--total",
                "1",
                "--targets",
                str(targets),
                "--output",
                str(tmp_path / "out.csv"),
            ],
        )
        assert result.exit_code == 1

    def test_missing_output_is_usage_error(self, runner, scores_csv):
        result = runner.invoke(
            cli, ["recalibrate", "--input", str(scores_csv), "--total", "1"]
        )
        assert result.exit_code == 1

    def test_bad_tolerance_is_usage_error(self, runner, scores_csv, tmp_path):
        result = runner.invoke(
            cli,
            [
                "recalibrate",
                "--input",
                str(scores_csv),
                "--total",
                "1",
                "--tolerance",
                "-1",
                "--output",
                str(tmp_path / "out.csv"),
            ],
        )
        assert result.exit_code == 1

    def test_numerical_failure_exit_code(self, runner, scores_csv, tmp_path):
        with patch(
            "logit_shift.main.recalibrate_file",
            side_effect=ConvergenceError("stalled"),
        ):
            result = runner.invoke(
                cli,
                [
                    "recalibrate",
                    "--input",
                    str(scores_csv),
                    "--total",
                    "1",
                    "--output",
                    str(tmp_path / "out.csv"),
                ],
            )
        assert result.exit_code == 3


class TestSimulate:
    def test_writes_report_and_table(self, runner, tmp_path):
        out = tmp_path / "report.json"
        table = tmp_path / "table.txt"
        result = runner.invoke(
            cli,
            [
                "simulate",
                "--n",
                "40",
                "--seed",
                "3",
                "--output",
                str(out),
                "--table",
                str(table),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert len(report["rows"]) == 12
        assert report["n"] == 40
        assert "Extremal" in table.read_text()

    def test_deterministic(self, runner, tmp_path):
        args = ["simulate", "--n", "30", "--seed", "5"]
        runner.invoke(cli, [*args, "--output", str(tmp_path / "a.json")])
        runner.invoke(cli, [*args, "--output", str(tmp_path / "b.json")])
        assert (tmp_path / "a.json").read_text() == (tmp_path / "b.json").read_text()

    def test_n_of_one_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["simulate", "--n", "1", "--output", str(tmp_path / "r.json")]
        )
        assert result.exit_code == 1


class TestVerify:
    def test_passes(self, runner):
        result = runner.invoke(cli, ["verify", "--max-n", "8", "--seeds", "6"])
        assert result.exit_code == 0, result.output
        assert "oracle equivalence" in result.output

    def test_failure_exit_code(self, runner):
        failing = [PropertyCheck(name="x", passed=False, cases=1, tolerance=1e-9)]
        with patch("logit_shift.main.run_checks", return_value=failing):
            result = runner.invoke(cli, ["verify"])
        assert result.exit_code == 3

    @pytest.mark.parametrize(
        "args", [["--max-n", "25"], ["--max-n", "1"], ["--seeds", "0"]]
    )
    def test_usage_errors(self, runner, args):
        result = runner.invoke(cli, ["verify", *args])
        assert result.exit_code == 1

    def test_enumeration_cap_from_env(self, runner, monkeypatch):
        monkeypatch.setenv("LOGIT_SHIFT_ENUMERATION_CAP", "10")
        result = runner.invoke(cli, ["verify", "--max-n", "12"])
        assert result.exit_code == 1


class TestHelp:
    def test_help_exits_cleanly(self, runner):
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        for name in ("recalibrate", "simulate", "verify"):
            assert name in result.output
