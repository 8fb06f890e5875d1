"""Field-level accuracy metric and evaluation reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .backends import ModelBackend
from .extraction import ExtractionOutcome, ExtractionRequest, extract
from .guardrails import ExtractionCandidate
from .schema import AttributeSpec, SchemaDoc

MATCH = "match"
MISMATCH = "mismatch"
MISSING = "missing"
SPURIOUS = "spurious"


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def values_equal(expected: Any, actual: Any) -> bool:
    """Minimal normalization: edge whitespace stripped, numerics compared
    numerically, everything else case-sensitive exact."""
    if _is_number(expected) and _is_number(actual):
        return float(expected) == float(actual)
    if isinstance(expected, str) and isinstance(actual, str):
        return expected.strip() == actual.strip()
    return type(expected) is type(actual) and expected == actual


def strict_compare(expected: Any, actual: Any, schema: SchemaDoc) -> tuple[bool, dict[str, str]]:
    """Per-field verdicts plus the all-required-fields-correct flag.

    Required-path mismatches and spurious non-null values flip correctness;
    optional-path mismatches are recorded only.
    """
    per_field: dict[str, str] = {}
    correct = True

    def flip_if(required: bool, status: str):
        nonlocal correct
        if status == SPURIOUS or (required and status in (MISMATCH, MISSING)):
            correct = False

    def record(path: str, status: str, required: bool):
        per_field[path or "/"] = status
        flip_if(required, status)

    def walk(spec: AttributeSpec, e: Any, a: Any, path: str, required: bool):
        if spec.kind == "object":
            e_map = e if isinstance(e, dict) else {}
            a_map = a if isinstance(a, dict) else {}
            for name, child in spec.children.items():
                walk(
                    child,
                    e_map.get(name),
                    a_map.get(name),
                    f"{path}/{name}",
                    required and name in spec.required_children,
                )
            return
        if spec.kind == "array":
            if e is None and a is None:
                record(path, MATCH, required)
            elif e is None:
                record(path, SPURIOUS, required)
            elif a is None:
                record(path, MISSING, required)
            elif not isinstance(e, list) or not isinstance(a, list) or len(e) != len(a):
                record(path, MISMATCH, required)
            else:
                for i, (ev, av) in enumerate(zip(e, a)):
                    walk(spec.item, ev, av, f"{path}/{i}", required)
            return
        # leaf
        if e is None and a is None:
            record(path, MATCH, required)
        elif e is None:
            record(path, SPURIOUS, required)
        elif a is None:
            record(path, MISSING, required)
        else:
            record(path, MATCH if values_equal(e, a) else MISMATCH, required)

    walk(schema.root, expected, actual, "", True)
    return correct, per_field


def trees_equal(expected: Any, actual: Any, schema: SchemaDoc) -> bool:
    """Exact-match comparison over every field (optional ones included)."""
    _, per_field = strict_compare(expected, actual, schema)
    return all(status == MATCH for status in per_field.values())


# --- evaluation -----------------------------------------------------------------


@dataclass(frozen=True)
class EngineConfig:
    max_retries: int = 3
    reflection_enabled: bool = True
    llm_condition_check: bool = False

    def to_dict(self) -> dict:
        return {
            "max_retries": self.max_retries,
            "reflection_enabled": self.reflection_enabled,
            "llm_condition_check": self.llm_condition_check,
        }


@dataclass(frozen=True)
class EvalRecord:
    sample_id: int
    expected: Any
    outcome: ExtractionOutcome
    correct: bool
    per_field: dict[str, str]


@dataclass(frozen=True)
class RunReport:
    accuracy: float
    sample_count: int
    processed: int
    retry_histogram: dict[int, int]
    error_reduction_at_1: Optional[float]
    mean_latency: float
    error_code_breakdown: dict[str, int]
    config: dict
    diff_histogram: Optional[dict[str, float]] = None

    def to_json_dict(self) -> dict:
        out = {
            "accuracy": self.accuracy,
            "sample_count": self.sample_count,
            "processed": self.processed,
            "retry_histogram": {str(k): v for k, v in sorted(self.retry_histogram.items())},
            "error_reduction_at_1": self.error_reduction_at_1,
            "mean_latency": self.mean_latency,
            "error_code_breakdown": dict(sorted(self.error_code_breakdown.items())),
            "config": self.config,
        }
        if self.diff_histogram is not None:
            out["diff_histogram"] = dict(sorted(self.diff_histogram.items()))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    def summary_table(self) -> str:
        lines = [
            f"samples      {self.sample_count}",
            f"accuracy     {self.accuracy:.4f}",
            f"mean latency {self.mean_latency:.4f}s",
        ]
        if self.error_reduction_at_1 is not None:
            lines.append(f"error reduction @1 retry {self.error_reduction_at_1:.4f}")
        for retries, count in sorted(self.retry_histogram.items()):
            lines.append(f"retries={retries}  {count}")
        for code, count in sorted(self.error_code_breakdown.items()):
            lines.append(f"finding {code}  {count}")
        return "\n".join(lines)


def score_outcome(expected: Any, outcome: ExtractionOutcome, schema: SchemaDoc) -> tuple[bool, dict[str, str]]:
    if isinstance(outcome.final, ExtractionCandidate):
        return strict_compare(expected, outcome.final.values, schema)
    _, per_field = strict_compare(expected, {}, schema)
    return False, per_field


def build_report(records: Sequence[EvalRecord], config: EngineConfig) -> RunReport:
    n = len(records)
    retry_histogram: dict[int, int] = {}
    breakdown: dict[str, int] = {}
    attempt0_failures = 0
    still_failing_after_1 = 0
    total_latency = 0.0
    correct = 0

    for record in records:
        outcome = record.outcome
        retry_histogram[outcome.retries_used] = retry_histogram.get(outcome.retries_used, 0) + 1
        total_latency += outcome.backend_time
        if record.correct:
            correct += 1
        first = outcome.attempts[0]
        if not first.passed:
            attempt0_failures += 1
            recovered = len(outcome.attempts) >= 2 and outcome.attempts[1].passed
            if not recovered:
                still_failing_after_1 += 1
        for attempt in outcome.attempts:
            if attempt.report is not None:
                for finding in attempt.report.findings():
                    breakdown[finding.code.value] = breakdown.get(finding.code.value, 0) + 1
            if attempt.parse_error is not None:
                kind = attempt.parse_error.split(":", 1)[0]
                breakdown[kind] = breakdown.get(kind, 0) + 1

    reduction = None
    if attempt0_failures > 0:
        reduction = 1.0 - still_failing_after_1 / attempt0_failures

    return RunReport(
        accuracy=correct / n if n else 0.0,
        sample_count=n,
        processed=n,
        retry_histogram=retry_histogram,
        error_reduction_at_1=reduction,
        mean_latency=total_latency / n if n else 0.0,
        error_code_breakdown=breakdown,
        config=config.to_dict(),
    )


def run_eval(
    samples: Sequence[tuple[str, Any]],
    schema: SchemaDoc,
    config: EngineConfig,
    backend: ModelBackend,
) -> tuple[RunReport, list[EvalRecord]]:
    if not samples:
        raise ValueError("dataset is empty")
    records: list[EvalRecord] = []
    for i, (input_text, expected) in enumerate(samples):
        request = ExtractionRequest(
            source_text=input_text,
            schema=schema,
            max_retries=config.max_retries,
            reflection_enabled=config.reflection_enabled,
            llm_condition_check=config.llm_condition_check,
        )
        outcome = extract(request, backend)
        correct, per_field = score_outcome(expected, outcome, schema)
        records.append(
            EvalRecord(
                sample_id=i,
                expected=expected,
                outcome=outcome,
                correct=correct,
                per_field=per_field,
            )
        )
    return build_report(records, config), records


def ab_delta(report_a: RunReport, report_b: RunReport) -> dict:
    return {
        "accuracy_delta": report_a.accuracy - report_b.accuracy,
        "mean_latency_delta": report_a.mean_latency - report_b.mean_latency,
        "error_reduction_at_1": {
            "a": report_a.error_reduction_at_1,
            "b": report_b.error_reduction_at_1,
        },
    }
