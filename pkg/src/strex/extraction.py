"""Reflection-guarded extraction loop: prompt, invoke, parse, validate, retry."""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from . import guardrails
from .backends import ChatRequest, ChatResponse, ModelBackend
from .errors import MalformedPayload, MissingTags, ShapeViolation, StrexError
from .guardrails import (
    ExtractionCandidate,
    Finding,
    FindingCode,
    ReflectionNote,
    Stage,
    StageResult,
    ValidationReport,
    build_reflection,
)
from .prompts import render_base_prompt, render_condition_prompt
from .schema import AttributeSpec, SchemaDoc

HARD_RETRY_CAP = 10
DEFAULT_MAX_RETRIES = 3

NAIVE_RETRY_LINE = "Your previous answer was invalid. Try again."


@dataclass(frozen=True)
class ExtractionRequest:
    source_text: str
    schema: SchemaDoc
    max_retries: int = DEFAULT_MAX_RETRIES
    reflection_enabled: bool = True
    llm_condition_check: bool = False

    def __post_init__(self):
        if not 0 <= self.max_retries <= HARD_RETRY_CAP:
            raise ValueError(f"max_retries must be in [0, {HARD_RETRY_CAP}]")


@dataclass(frozen=True)
class Attempt:
    raw_response: str
    candidate: Optional[ExtractionCandidate]
    report: Optional[ValidationReport]
    parse_error: Optional[str]
    reflection: Optional[ReflectionNote]
    backend_latency: float

    @property
    def passed(self) -> bool:
        return self.report is not None and self.report.overall


@dataclass(frozen=True)
class Failure:
    reason: str
    last_report: Optional[ValidationReport] = None
    last_error: Optional[str] = None


@dataclass(frozen=True)
class ExtractionOutcome:
    final: Union[ExtractionCandidate, Failure]
    attempts: tuple[Attempt, ...]
    wall_time: float

    @property
    def retries_used(self) -> int:
        return len(self.attempts) - 1

    @property
    def succeeded(self) -> bool:
        return isinstance(self.final, ExtractionCandidate)

    @property
    def backend_time(self) -> float:
        return sum(a.backend_latency for a in self.attempts)


_VALUES_OPEN = "<attribute_values>"
_VALUES_CLOSE = "</attribute_values>"


def extract_values_block(raw: str) -> str:
    """Innermost <attribute_values> payload text."""
    start = raw.rfind(_VALUES_OPEN)
    if start < 0:
        raise MissingTags("no <attribute_values> block in response")
    start += len(_VALUES_OPEN)
    end = raw.find(_VALUES_CLOSE, start)
    if end < 0:
        raise MissingTags("unterminated <attribute_values> block")
    return raw[start:end].strip()


def parse_response(raw: str, schema: SchemaDoc, source_text: str = "") -> ExtractionCandidate:
    block = extract_values_block(raw)
    try:
        values = json.loads(block)
    except json.JSONDecodeError as exc:
        raise MalformedPayload(f"attribute_values block is not JSON: {exc}") from None
    if not isinstance(values, dict):
        raise MalformedPayload("attribute_values payload must be a JSON object")
    guardrails.check_shape(values, schema)
    return ExtractionCandidate(values=values, source_text=source_text, schema=schema)


def _retry_prompt(base_prompt: str, previous: Attempt, feedback: str) -> str:
    try:
        payload = extract_values_block(previous.raw_response)
    except MissingTags:
        payload = previous.raw_response
    return (
        f"{base_prompt}\n\n<previous_attempt>\n{payload}\n</previous_attempt>\n{feedback}"
    )


def llm_condition_stage(
    candidate: ExtractionCandidate, schema: SchemaDoc, backend: ModelBackend
) -> tuple[list[Finding], float]:
    """Judge each condition-bearing non-null value via the backend.

    Returns findings plus the backend time spent.
    """
    findings: list[Finding] = []
    spent = 0.0

    def walk(spec: AttributeSpec, value: Any, path: str):
        nonlocal spent
        if value is None:
            return
        if isinstance(value, dict):
            for name, child_value in value.items():
                child = spec.children.get(name)
                if child is not None:
                    walk(child, child_value, f"{path}/{name}")
            return
        if isinstance(value, list):
            if spec.item is not None:
                for i, element in enumerate(value):
                    walk(spec.item, element, f"{path}/{i}")
            return
        if spec.condition:
            prompt = render_condition_prompt(path, spec.condition, value)
            response = backend.complete(ChatRequest.of(prompt))
            spent += response.latency
            verdict = re.search(r"<verdict>\s*(\w+)\s*</verdict>", response.text)
            if verdict is None or verdict.group(1).upper() != "PASS":
                findings.append(
                    Finding(
                        stage=Stage.CONDITION_CHECK,
                        path=path,
                        code=FindingCode.TYPE_MISMATCH,
                        detail="condition unsatisfied",
                        offending_value=value,
                    )
                )

    walk(schema.root, candidate.values, "")
    return findings, spent


def extract(request: ExtractionRequest, backend: ModelBackend) -> ExtractionOutcome:
    started = time.perf_counter()
    base_prompt = render_base_prompt(request.schema, request.source_text)
    attempts: list[Attempt] = []
    prompt = base_prompt

    for attempt_no in range(request.max_retries + 1):
        response = backend.complete(ChatRequest.of(prompt))
        candidate = None
        report = None
        parse_error = None
        condition_time = 0.0
        try:
            candidate = parse_response(response.text, request.schema, request.source_text)
            extra: tuple[StageResult, ...] = ()
            if request.llm_condition_check and backend is not None:
                findings, condition_time = llm_condition_stage(candidate, request.schema, backend)
                extra = (
                    StageResult(
                        stage=Stage.CONDITION_CHECK,
                        passed=not findings,
                        findings=tuple(findings),
                    ),
                )
            report = guardrails.validate(candidate, request.schema, extra_stages=extra)
        except (MissingTags, MalformedPayload, ShapeViolation) as exc:
            parse_error = f"{type(exc).__name__}: {exc}"

        reflection = None
        failed = parse_error is not None or (report is not None and not report.overall)
        if failed and attempt_no < request.max_retries:
            if request.reflection_enabled:
                if parse_error is not None:
                    reflection = ReflectionNote(
                        text=(
                            "Your previous answer could not be parsed: "
                            f"{parse_error}. Answer again using the exact "
                            "<response><thinking></thinking><attribute_values>"
                            "</attribute_values></response> format with a JSON object payload."
                        ),
                        finding_count=1,
                    )
                else:
                    reflection = build_reflection(report, request.schema)
                feedback = reflection.text
            else:
                feedback = NAIVE_RETRY_LINE
        else:
            feedback = None

        attempt = Attempt(
            raw_response=response.text,
            candidate=candidate,
            report=report,
            parse_error=parse_error,
            reflection=reflection,
            backend_latency=response.latency + condition_time,
        )
        attempts.append(attempt)

        if attempt.passed:
            final: Union[ExtractionCandidate, Failure] = attempt.candidate
            break
        if attempt_no == request.max_retries:
            final = Failure(
                reason="BudgetExhausted",
                last_report=report,
                last_error=parse_error,
            )
            break
        prompt = _retry_prompt(base_prompt, attempt, feedback)

    elapsed = time.perf_counter() - started
    backend_time = sum(a.backend_latency for a in attempts)
    return ExtractionOutcome(
        final=final,
        attempts=tuple(attempts),
        wall_time=max(elapsed, backend_time),
    )
