import json

import pytest

from conftest import wrap_values
from strex.backends import ScriptedBackend, ScriptedPolicy, ScriptedRule
from strex.metrics import (
    MATCH,
    MISMATCH,
    MISSING,
    SPURIOUS,
    EngineConfig,
    ab_delta,
    build_report,
    run_eval,
    strict_compare,
    trees_equal,
    values_equal,
)
from strex.schema import schema_from_value


def doc(value):
    return schema_from_value(value)


PERSON = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "age": {"type": "integer"},
        "nick": {"type": "string"},
    },
    "required": ["name", "age"],
}


class TestValuesEqual:
    def test_edge_whitespace_stripped(self):
        assert values_equal(" Ada ", "Ada")

    def test_case_sensitive(self):
        assert not values_equal("ada", "Ada")

    def test_interior_whitespace_matters(self):
        assert not values_equal("San  Francisco", "San Francisco")

    def test_numeric_comparison(self):
        assert values_equal(5, 5.0)
        assert not values_equal(5, "5")
        assert not values_equal(True, 1)

    def test_null_vs_value(self):
        assert not values_equal(None, "x")


class TestStrictCompare:
    def test_all_match(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare(
            {"name": "Ada", "age": 36, "nick": None},
            {"name": "Ada", "age": 36, "nick": None},
            schema,
        )
        assert correct
        assert per_field == {"/name": MATCH, "/age": MATCH, "/nick": MATCH}

    def test_required_mismatch_flips(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare(
            {"name": "Ada", "age": 36}, {"name": "Grace", "age": 36}, schema
        )
        assert not correct
        assert per_field["/name"] == MISMATCH

    def test_required_missing_flips(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare({"name": "Ada", "age": 36}, {"age": 36}, schema)
        assert not correct
        assert per_field["/name"] == MISSING

    def test_optional_mismatch_recorded_only(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare(
            {"name": "Ada", "age": 36, "nick": "Lovey"},
            {"name": "Ada", "age": 36, "nick": "Addy"},
            schema,
        )
        assert correct
        assert per_field["/nick"] == MISMATCH

    def test_optional_spurious_flips(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare(
            {"name": "Ada", "age": 36, "nick": None},
            {"name": "Ada", "age": 36, "nick": "Addy"},
            schema,
        )
        assert not correct
        assert per_field["/nick"] == SPURIOUS

    def test_absent_equals_null(self):
        schema = doc(PERSON)
        correct, per_field = strict_compare(
            {"name": "Ada", "age": 36}, {"name": "Ada", "age": 36, "nick": None}, schema
        )
        assert correct
        assert per_field["/nick"] == MATCH

    def test_array_compared_by_index(self):
        schema = doc(
            {
                "type": "object",
                "properties": {"tags": {"type": "array", "items": {"type": "string"}}},
                "required": ["tags"],
            }
        )
        correct, per_field = strict_compare({"tags": ["a", "b"]}, {"tags": ["a", "c"]}, schema)
        assert not correct
        assert per_field == {"/tags/0": MATCH, "/tags/1": MISMATCH}

    def test_array_length_mismatch(self):
        schema = doc(
            {
                "type": "object",
                "properties": {"tags": {"type": "array", "items": {"type": "string"}}},
                "required": ["tags"],
            }
        )
        correct, per_field = strict_compare({"tags": ["a", "b"]}, {"tags": ["a"]}, schema)
        assert not correct
        assert per_field == {"/tags": MISMATCH}

    def test_trees_equal_counts_optional_fields(self):
        schema = doc(PERSON)
        assert trees_equal({"name": "Ada", "age": 1}, {"name": "Ada", "age": 1, "nick": None}, schema)
        assert not trees_equal(
            {"name": "Ada", "age": 1, "nick": "A"}, {"name": "Ada", "age": 1, "nick": "B"}, schema
        )


class TestRunEval:
    def eval_once(self, samples, responses_by_marker, config=EngineConfig()):
        schema = doc(PERSON)
        rules = tuple(
            ScriptedRule(match={"contains": marker}, respond=response)
            for marker, response in responses_by_marker
        )
        backend = ScriptedBackend(ScriptedPolicy(rules=rules, default=wrap_values({})))
        return run_eval(samples, schema, config, backend)

    def test_accuracy_and_histogram(self):
        samples = [
            ("sample-one Ada 36", {"name": "Ada", "age": 36}),
            ("sample-two Grace 45", {"name": "Grace", "age": 45}),
        ]
        report, records = self.eval_once(
            samples,
            [
                ("sample-one", wrap_values({"name": "Ada", "age": 36})),
                ("sample-two", wrap_values({"name": "Wrong", "age": 45})),
            ],
            EngineConfig(max_retries=0),
        )
        assert report.accuracy == 0.5
        assert report.sample_count == 2
        assert report.retry_histogram == {0: 2}
        assert records[0].correct and not records[1].correct

    def test_error_reduction_at_1(self):
        # one sample fails attempt 0 and recovers at attempt 1; one never fails
        samples = [
            ("alpha Ada 36", {"name": "Ada", "age": 36}),
            ("beta Grace 45", {"name": "Grace", "age": 45}),
        ]
        report, _ = self.eval_once(
            samples,
            [
                ("NotGrounded at /name", wrap_values({"name": "Ada", "age": 36})),
                ("alpha", wrap_values({"name": "Zed", "age": 36})),
                ("beta", wrap_values({"name": "Grace", "age": 45})),
            ],
        )
        assert report.error_reduction_at_1 == 1.0
        assert report.retry_histogram == {0: 1, 1: 1}

    def test_error_reduction_none_when_no_failures(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        report, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        assert report.error_reduction_at_1 is None

    def test_failure_scores_against_empty_tree(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        report, records = self.eval_once(
            samples, [("alpha", "never parseable")], EngineConfig(max_retries=0)
        )
        assert report.accuracy == 0.0
        assert records[0].per_field["/name"] == MISSING

    def test_error_code_breakdown_counts_findings_and_parse_kinds(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        report, _ = self.eval_once(
            samples,
            [("alpha", wrap_values({"name": "Nobody", "age": 36}))],
            EngineConfig(max_retries=1),
        )
        assert report.error_code_breakdown["NotGrounded"] == 2

    def test_empty_dataset_rejected(self):
        schema = doc(PERSON)
        backend = ScriptedBackend(ScriptedPolicy(rules=(), default=wrap_values({})))
        with pytest.raises(ValueError):
            run_eval([], schema, EngineConfig(), backend)

    def test_report_json_is_deterministic(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        r1, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        r2, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        assert r1.to_json() == r2.to_json()
        parsed = json.loads(r1.to_json())
        assert parsed["accuracy"] == 1.0
        assert parsed["config"]["max_retries"] == 3

    def test_mean_latency_uses_backend_recorded_durations(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        report, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        assert report.mean_latency == 0.0  # scripted backend reports zero-cost calls

    def test_summary_table_mentions_accuracy(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        report, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        assert "accuracy" in report.summary_table()

    def test_ab_delta(self):
        samples = [("alpha Ada 36", {"name": "Ada", "age": 36})]
        good, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Ada", "age": 36}))])
        bad, _ = self.eval_once(samples, [("alpha", wrap_values({"name": "Zed", "age": 36}))])
        delta = ab_delta(good, bad)
        assert delta["accuracy_delta"] == 1.0
