import json

import pytest
from click.testing import CliRunner

from conftest import wrap_values
from strex.cli import main

PERSON = {
    "type": "object",
    "properties": {"name": {"type": "string"}, "age": {"type": "integer"}},
    "required": ["name"],
}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "schema.json").write_text(json.dumps(PERSON), encoding="utf-8")
    policy = {"rules": [], "default": wrap_values({"name": "Ada", "age": 36})}
    (tmp_path / "policy.json").write_text(json.dumps(policy), encoding="utf-8")
    bad_policy = {"rules": [], "default": wrap_values({"name": "Zed"})}
    (tmp_path / "bad_policy.json").write_text(json.dumps(bad_policy), encoding="utf-8")
    dataset = json.dumps(
        {"turns": [{"speaker": "user", "text": "I am Ada, age 36"}], "expected": {"name": "Ada", "age": 36}}
    )
    (tmp_path / "dataset.jsonl").write_text(dataset + "\n", encoding="utf-8")
    program = {
        "source_schema": PERSON,
        "target_schema": {"type": "object", "properties": {"label": {"type": "string"}}},
        "steps": [{"op": "rename", "src": "/name", "dst": "/label"}],
    }
    (tmp_path / "program.json").write_text(json.dumps(program), encoding="utf-8")
    pairs = [
        {"optimized_output": {"name": "Ada", "age": 1}, "expected_original": {"label": "Ada"}},
        {"optimized_output": {"name": "Bo", "age": 2}, "expected_original": {"label": "Bo"}},
    ]
    (tmp_path / "pairs.jsonl").write_text(
        "".join(json.dumps(p) + "\n" for p in pairs), encoding="utf-8"
    )
    (tmp_path / "bad_pairs.jsonl").write_text(
        json.dumps({"optimized_output": {"name": "Ada"}, "expected_original": {"label": "Nope"}}) + "\n",
        encoding="utf-8",
    )
    return tmp_path


class TestExtract:
    def test_success(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "schema.json"),
                "--text", "Ada is 36",
                "--policy", str(workdir / "policy.json"),
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["values"] == {"name": "Ada", "age": 36}

    def test_failure_exit_code(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "schema.json"),
                "--text", "Ada is 36",
                "--max-retries", "0",
                "--policy", str(workdir / "bad_policy.json"),
            ],
        )
        assert result.exit_code == 1

    def test_record_then_replay(self, runner, workdir):
        cassette = workdir / "cassette.jsonl"
        recorded = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "schema.json"),
                "--text", "Ada is 36",
                "--policy", str(workdir / "policy.json"),
                "--record", str(cassette),
            ],
        )
        assert recorded.exit_code == 0, recorded.output
        assert cassette.exists()
        replayed = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "schema.json"),
                "--text", "Ada is 36",
                "--backend", "replay",
                "--cassette", str(cassette),
            ],
        )
        assert replayed.exit_code == 0, replayed.output
        assert json.loads(replayed.output)["values"] == json.loads(recorded.output)["values"]

    def test_relay_program_applied(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "schema.json"),
                "--text", "Ada is 36",
                "--policy", str(workdir / "policy.json"),
                "--relay-program", str(workdir / "program.json"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["relayed_values"] == {"label": "Ada"}

    def test_usage_error_exit_2(self, runner, workdir):
        result = runner.invoke(
            main,
            ["extract", "--schema", str(workdir / "schema.json"), "--policy", str(workdir / "policy.json")],
        )
        assert result.exit_code == 2  # neither --input nor --text

    def test_scripted_requires_policy(self, runner, workdir):
        result = runner.invoke(
            main, ["extract", "--schema", str(workdir / "schema.json"), "--text", "x"]
        )
        assert result.exit_code == 2


class TestEval:
    def test_report_written(self, runner, workdir):
        out = workdir / "report.json"
        result = runner.invoke(
            main,
            [
                "eval",
                "--schema", str(workdir / "schema.json"),
                "--dataset", str(workdir / "dataset.jsonl"),
                "--policy", str(workdir / "policy.json"),
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text(encoding="utf-8"))["report"]
        assert report["accuracy"] == 1.0

    def test_ab_mode(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "eval",
                "--schema", str(workdir / "schema.json"),
                "--dataset", str(workdir / "dataset.jsonl"),
                "--policy", str(workdir / "policy.json"),
                "--ab",
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert "report_b" in body and "delta" in body


class TestRelayCheck:
    def test_verified(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "relay-check",
                "--program", str(workdir / "program.json"),
                "--pairs", str(workdir / "pairs.jsonl"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["verified"] is True

    def test_failing_exit_1(self, runner, workdir):
        result = runner.invoke(
            main,
            [
                "relay-check",
                "--program", str(workdir / "program.json"),
                "--pairs", str(workdir / "bad_pairs.jsonl"),
            ],
        )
        assert result.exit_code == 1


class TestBuild:
    def test_build_runs_loop(self, runner, workdir):
        example = (
            "<example><input_text>Ada is 36 here</input_text>"
            '<ground_truth>{"name": "Ada", "age": 36}</ground_truth><challenge>c</challenge></example>'
        )
        policy = {
            "rules": [
                {"match": {"contains": "challenging datasets"}, "respond": example},
                {"match": {"contains": "attribute extractor"}, "respond": wrap_values({"name": "Ada", "age": 36})},
            ],
            "default": None,
        }
        (workdir / "build_policy.json").write_text(json.dumps(policy), encoding="utf-8")
        result = runner.invoke(
            main,
            [
                "build",
                "--task", "extract the person",
                "--schema", str(workdir / "schema.json"),
                "--n-samples", "1",
                "--policy", str(workdir / "build_policy.json"),
            ],
        )
        assert result.exit_code == 0, result.output
        body = json.loads(result.output)
        assert body["state"]["iterations"][0]["val_accuracy"] == 1.0
        assert body["relay_program"]["steps"] == []


class TestErrors:
    def test_service_error_surfaces(self, runner, workdir):
        (workdir / "bad_schema.json").write_text(
            json.dumps({"type": "object", "properties": {"x": {"type": "string", "if": 1}}}),
            encoding="utf-8",
        )
        result = runner.invoke(
            main,
            [
                "extract",
                "--schema", str(workdir / "bad_schema.json"),
                "--text", "x",
                "--policy", str(workdir / "policy.json"),
            ],
        )
        assert result.exit_code == 1
        assert "ForbiddenKey" in result.output
