"""Static validation stages over an extraction candidate, plus reflections.

Stages always run in the fixed order: missing-attribute, grounding,
rule-compliance. `condition` texts are never evaluated here; they are only
quoted back in reflections (and optionally judged by a model, see
strex.extraction).
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

from . import dates
from .errors import NothingToReflect, ShapeViolation
from .schema import AttributeSpec, SchemaDoc, compile_pattern


class Stage(str, Enum):
    MISSING_ATTRIBUTE = "MissingAttribute"
    GROUNDING = "Grounding"
    RULE_COMPLIANCE = "RuleCompliance"
    CONDITION_CHECK = "ConditionCheck"  # optional model-judged stage


class FindingCode(str, Enum):
    MISSING_REQUIRED = "MissingRequired"
    NOT_GROUNDED = "NotGrounded"
    PATTERN_MISMATCH = "PatternMismatch"
    LENGTH_VIOLATION = "LengthViolation"
    ENUM_VIOLATION = "EnumViolation"
    DATE_FORMAT_VIOLATION = "DateFormatViolation"
    TYPE_MISMATCH = "TypeMismatch"


@dataclass(frozen=True)
class Finding:
    stage: Stage
    path: str
    code: FindingCode
    detail: str
    offending_value: Any = None


@dataclass(frozen=True)
class StageResult:
    stage: Stage
    passed: bool
    findings: tuple[Finding, ...]


@dataclass(frozen=True)
class ValidationReport:
    stages: tuple[StageResult, ...]
    overall: bool

    def findings(self) -> list[Finding]:
        return [f for s in self.stages for f in s.findings]


@dataclass(frozen=True)
class ExtractionCandidate:
    values: dict
    source_text: str
    schema: SchemaDoc


@dataclass(frozen=True)
class ReflectionNote:
    text: str
    finding_count: int
    source_overall: bool = False


# --- text normalization ---------------------------------------------------------

_WS_RUN = re.compile(r"\s+")


def _collapse(text: str) -> str:
    return _WS_RUN.sub(" ", text)


def _is_edge_trim(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def normalize_haystack(text: str) -> str:
    return _collapse(text.casefold())


def normalize_needle(value: str) -> str:
    needle = _collapse(value.casefold()).strip()
    while needle and _is_edge_trim(needle[0]):
        needle = needle[1:]
    while needle and _is_edge_trim(needle[-1]):
        needle = needle[:-1]
    return needle.strip()


def text_grounded(value: str, source_text: str) -> bool:
    needle = normalize_needle(value)
    return needle == "" or needle in normalize_haystack(source_text)


def digits_grounded(value, source_text: str) -> bool:
    needle = "".join(ch for ch in str(value) if ch.isdigit())
    haystack = "".join(ch for ch in source_text if ch.isdigit())
    return needle == "" or needle in haystack


# --- shape checking ----------------------------------------------------------------


def check_shape(values: Any, schema: SchemaDoc) -> None:
    """Raise ShapeViolation when the candidate tree leaves the schema's shape."""
    _check_shape(schema.root, values, "")


def _check_shape(spec: AttributeSpec, value: Any, path: str) -> None:
    if value is None:
        return
    if isinstance(value, dict):
        if spec.kind != "object":
            raise ShapeViolation(path, "object value on a non-object attribute")
        for name, child_value in value.items():
            child = spec.children.get(name)
            if child is None:
                raise ShapeViolation(f"{path}/{name}")
            _check_shape(child, child_value, f"{path}/{name}")
    elif isinstance(value, list):
        if spec.kind != "array" or spec.item is None:
            raise ShapeViolation(path, "list value on a non-array attribute")
        for i, element in enumerate(value):
            _check_shape(spec.item, element, f"{path}/{i}")
    # scalars never introduce new paths; type errors belong to rule compliance


# --- stage 1: missing attributes ---------------------------------------------------


def check_missing_attributes(candidate: ExtractionCandidate, schema: SchemaDoc) -> list[Finding]:
    findings: list[Finding] = []
    _missing_walk(schema.root, candidate.values, "", findings)
    return findings


def _missing_walk(spec: AttributeSpec, value: Any, path: str, findings: list[Finding]) -> None:
    if spec.kind == "object":
        if not isinstance(value, dict):
            # object itself absent or non-dict: its own presence is judged by the
            # parent's required set; nothing to descend into
            return
        for name in sorted(spec.required_children):
            if name not in value:
                findings.append(
                    Finding(
                        stage=Stage.MISSING_ATTRIBUTE,
                        path=f"{path}/{name}",
                        code=FindingCode.MISSING_REQUIRED,
                        detail="required attribute is absent from the answer",
                    )
                )
        for name, child_value in value.items():
            child = spec.children.get(name)
            if child is not None:
                _missing_walk(child, child_value, f"{path}/{name}", findings)
    elif spec.kind == "array" and isinstance(value, list):
        for i, element in enumerate(value):
            _missing_walk(spec.item, element, f"{path}/{i}", findings)


# --- stage 2: grounding ----------------------------------------------------------------


def check_grounding(candidate: ExtractionCandidate, schema: SchemaDoc) -> list[Finding]:
    findings: list[Finding] = []
    _grounding_walk(schema.root, candidate.values, "", candidate.source_text, findings)
    return findings


def _grounding_walk(spec: AttributeSpec, value: Any, path: str, text: str, findings: list[Finding]) -> None:
    if value is None:
        return
    if isinstance(value, dict):
        for name, child_value in value.items():
            child = spec.children.get(name)
            if child is not None:
                _grounding_walk(child, child_value, f"{path}/{name}", text, findings)
        return
    if isinstance(value, list):
        if spec.item is not None:
            for i, element in enumerate(value):
                _grounding_walk(spec.item, element, f"{path}/{i}", text, findings)
        return
    if isinstance(value, bool):
        return  # booleans are judgments, not spans; no grounding burden
    if isinstance(value, (int, float)):
        if not digits_grounded(value, text):
            findings.append(
                Finding(
                    stage=Stage.GROUNDING,
                    path=path,
                    code=FindingCode.NOT_GROUNDED,
                    detail="numeric value's digit sequence does not occur in the input text",
                    offending_value=value,
                )
            )
        return
    if isinstance(value, str):
        ok = text_grounded(value, text)
        if not ok and spec.date_spec is not None:
            ok = dates.grounded_as_date(
                value, text, spec.date_spec.formats, spec.date_spec.delimiter
            )
        if not ok:
            findings.append(
                Finding(
                    stage=Stage.GROUNDING,
                    path=path,
                    code=FindingCode.NOT_GROUNDED,
                    detail="value does not occur in the input text",
                    offending_value=value,
                )
            )


# --- stage 3: rule compliance --------------------------------------------------------------


_KIND_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
}


def check_rules(candidate: ExtractionCandidate, schema: SchemaDoc) -> list[Finding]:
    findings: list[Finding] = []
    _rules_walk(schema.root, candidate.values, "", findings)
    return findings


def _rules_walk(spec: AttributeSpec, value: Any, path: str, findings: list[Finding]) -> None:
    if value is None:
        return

    def emit(code: FindingCode, detail: str):
        findings.append(
            Finding(stage=Stage.RULE_COMPLIANCE, path=path, code=code, detail=detail, offending_value=value)
        )

    if not _KIND_CHECKS[spec.kind](value):
        emit(FindingCode.TYPE_MISMATCH, f"expected {spec.kind}, got {type(value).__name__}")

    if isinstance(value, dict):
        for name, child_value in value.items():
            child = spec.children.get(name)
            if child is not None:
                _rules_walk(child, child_value, f"{path}/{name}", findings)
        return
    if isinstance(value, list):
        if spec.item is not None:
            for i, element in enumerate(value):
                _rules_walk(spec.item, element, f"{path}/{i}", findings)
        return

    if spec.enum_values is not None and value not in spec.enum_values:
        emit(FindingCode.ENUM_VIOLATION, f"value not among allowed values {list(spec.enum_values)!r}")

    if spec.pattern is not None and isinstance(value, str):
        if compile_pattern(spec.pattern).fullmatch(value) is None:
            emit(FindingCode.PATTERN_MISMATCH, f"value does not fully match pattern {spec.pattern!r}")

    string_form = value if isinstance(value, str) else str(value)
    if spec.min_length is not None and len(string_form) < spec.min_length:
        emit(FindingCode.LENGTH_VIOLATION, f"length {len(string_form)} below minLength {spec.min_length}")
    if spec.max_length is not None and len(string_form) > spec.max_length:
        emit(FindingCode.LENGTH_VIOLATION, f"length {len(string_form)} above maxLength {spec.max_length}")

    if spec.date_spec is not None and isinstance(value, str):
        if not dates.matches_any_format(value, spec.date_spec.formats, spec.date_spec.delimiter):
            emit(
                FindingCode.DATE_FORMAT_VIOLATION,
                f"value does not match any of the allowed date formats {list(spec.date_spec.formats)!r}",
            )


# --- assembly ----------------------------------------------------------------------


def validate(candidate: ExtractionCandidate, schema: SchemaDoc, extra_stages: tuple[StageResult, ...] = ()) -> ValidationReport:
    """Run all three stages in order; no short-circuiting."""
    check_shape(candidate.values, schema)
    stage_findings = [
        (Stage.MISSING_ATTRIBUTE, check_missing_attributes(candidate, schema)),
        (Stage.GROUNDING, check_grounding(candidate, schema)),
        (Stage.RULE_COMPLIANCE, check_rules(candidate, schema)),
    ]
    stages = tuple(
        StageResult(stage=stage, passed=not found, findings=tuple(found))
        for stage, found in stage_findings
    ) + extra_stages
    return ValidationReport(stages=stages, overall=all(s.passed for s in stages))


_INSTRUCTIONS = {
    FindingCode.MISSING_REQUIRED: "Provide a value copied from the input, or an explicit null.",
    FindingCode.NOT_GROUNDED: "Only answer with spans that occur verbatim in the input text; copy the exact span.",
    FindingCode.PATTERN_MISMATCH: "Rewrite the value so it fully matches the pattern; drop any extra text.",
    FindingCode.LENGTH_VIOLATION: "Adjust the value so its length is inside the declared bounds.",
    FindingCode.ENUM_VIOLATION: "Answer with one of the allowed values, exactly as listed.",
    FindingCode.DATE_FORMAT_VIOLATION: "Re-format the date to one of the allowed formats.",
    FindingCode.TYPE_MISMATCH: "Emit a JSON value of the declared type.",
}


def _schema_demands(spec: Optional[AttributeSpec]) -> str:
    if spec is None:
        return ""
    parts = []
    if spec.description:
        parts.append(f'description: "{spec.description}"')
    if spec.pattern:
        parts.append(f'pattern: "{spec.pattern}"')
    if spec.enum_values is not None:
        parts.append(f"allowed values: {list(spec.enum_values)!r}")
    if spec.min_length is not None:
        parts.append(f"minLength: {spec.min_length}")
    if spec.max_length is not None:
        parts.append(f"maxLength: {spec.max_length}")
    if spec.condition:
        parts.append(f'condition: "{spec.condition}"')
    if spec.date_spec is not None:
        parts.append(f"allowed date formats: {list(spec.date_spec.formats)!r}")
    if not parts:
        return ""
    return " The schema demands: " + "; ".join(parts) + "."


def _spec_for_finding_path(schema: SchemaDoc, path: str) -> Optional[AttributeSpec]:
    # candidate paths use numeric indices where the schema uses "[]"
    spec = schema.root
    for seg in path.split("/"):
        if not seg:
            continue
        if seg.isdigit():
            spec = spec.item
        else:
            spec = spec.children.get(seg) if spec else None
        if spec is None:
            return None
    return spec


def build_reflection(report: ValidationReport, schema: SchemaDoc) -> ReflectionNote:
    if report.overall:
        raise NothingToReflect("report passed; nothing to reflect on")
    lines = [
        "Your previous answer failed validation. Fix every issue below, then answer "
        "again in the required format."
    ]
    n = 0
    for stage_result in report.stages:
        for finding in stage_result.findings:
            n += 1
            observed = (
                f" (observed: {finding.offending_value!r})"
                if finding.offending_value is not None
                else ""
            )
            demands = _schema_demands(_spec_for_finding_path(schema, finding.path))
            instruction = _INSTRUCTIONS[finding.code]
            if finding.detail == "condition unsatisfied":
                instruction = "Provide a value satisfying the condition, or null."
            lines.append(
                f"{n}. {stage_result.stage.value}: {finding.code.value} at {finding.path}: "
                f"{finding.detail}{observed}.{demands} {instruction}"
            )
    return ReflectionNote(text="\n".join(lines), finding_count=n)
