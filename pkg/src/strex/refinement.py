"""Iterative schema optimization: generate, stress-test, evaluate, refine.

Synthetic cases are regenerated each iteration against the current schema; a
fixed hold-out set generated once up front is used for scoring iterations and
picking the best one, so schemas cannot overfit the cases they were refined on.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .backends import ChatRequest, ModelBackend
from .errors import (
    GenerationFailed,
    InsufficientGeneration,
    OptimizationFailed,
    RefinementFailed,
    SchemaDialectError,
    ShapeViolation,
    StrexError,
)
from .extraction import ExtractionOutcome, ExtractionRequest, extract
from .guardrails import ExtractionCandidate, check_shape
from .metrics import EngineConfig, strict_compare
from .prompts import render_generator_prompt, render_refiner_prompt, render_synthetic_prompt
from .schema import (
    AttributeSpec,
    SchemaDoc,
    SchemaDiff,
    canonical_serialize,
    diff_schemas,
    parse_schema,
)

INSUFFICIENT_SCHEMA = "INSUFFICIENT_SCHEMA"

GENERATION_ROUND_CAP = 5
DIALECT_REPAIR_ATTEMPTS = 2


@dataclass(frozen=True)
class SeedSample:
    input_text: str
    expected: dict

    def __post_init__(self):
        if not self.expected:
            raise ValueError("seed sample must carry a non-empty expected tree")


@dataclass(frozen=True)
class SyntheticCase:
    input_text: str
    ground_truth: Any  # candidate tree, or the INSUFFICIENT_SCHEMA marker string
    challenge: str = ""

    @property
    def insufficient(self) -> bool:
        return self.ground_truth == INSUFFICIENT_SCHEMA


@dataclass(frozen=True)
class FailureRecord:
    case: SyntheticCase
    summary: dict
    mismatch_paths: tuple[str, ...]
    schema_insufficiency: bool = False


@dataclass(frozen=True)
class IterationRecord:
    schema: SchemaDoc
    val_accuracy: float
    failures: tuple[FailureRecord, ...]
    diff_from_prev: SchemaDiff


@dataclass
class RefinementState:
    tau: float
    max_iters: int
    iterations: list[IterationRecord] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        best = 0
        for i, record in enumerate(self.iterations):
            if record.val_accuracy > self.iterations[best].val_accuracy:
                best = i
        return best

    def to_json_dict(self) -> dict:
        return {
            "tau": self.tau,
            "max_iters": self.max_iters,
            "best_index": self.best_index,
            "iterations": [
                {
                    "schema": json.loads(canonical_serialize(r.schema)),
                    "val_accuracy": r.val_accuracy,
                    "failure_count": len(r.failures),
                    "diff_from_prev": [
                        {"path": c.path, "category": c.category.value} for c in r.diff_from_prev.changes
                    ],
                }
                for r in self.iterations
            ],
        }


@dataclass(frozen=True)
class OptimizeConfig:
    tau: float = 0.95
    max_iters: int = 6
    n_samples: int = 10
    holdout_samples: Optional[int] = None
    engine: EngineConfig = EngineConfig()

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


# --- tagged-block helpers -----------------------------------------------------------


def _extract_tag(raw: str, tag: str) -> Optional[str]:
    """Payload of the first <tag> block; tolerates a repeated opening tag
    standing in for the closing one."""
    m = re.search(rf"<{tag}>(.*?)</{tag}>", raw, re.DOTALL)
    if m:
        return m.group(1).strip()
    parts = raw.split(f"<{tag}>")
    if len(parts) >= 3:
        return parts[1].strip()
    return None


def _parse_tagged_schema(raw: str, tag: str) -> SchemaDoc:
    block = _extract_tag(raw, tag)
    if block is None:
        raise SchemaDialectError("", f"no <{tag}> block in response")
    return parse_schema(block)


# --- initial generation -----------------------------------------------------------


def generate_initial_schema(task: str, backend: ModelBackend) -> SchemaDoc:
    if not task or not task.strip():
        raise ValueError("task description must be non-empty")
    prompt = render_generator_prompt(task)
    last_error = None
    for _ in range(DIALECT_REPAIR_ATTEMPTS + 1):
        response = backend.complete(ChatRequest.of(prompt))
        try:
            schema = _parse_tagged_schema(response.text, "json_schema")
            return SchemaDoc(schema.root, schema.version_tag, task_hint=task)
        except SchemaDialectError as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            prompt = (
                f"{prompt}\n\nYour previous schema was rejected: {last_error}. "
                "Emit a corrected schema in <json_schema></json_schema> tags."
            )
    raise GenerationFailed(f"no dialect-valid schema after repairs: {last_error}")


# --- synthetic case generation ------------------------------------------------------


def serialize_seeds(seeds: Sequence[SeedSample]) -> str:
    return json.dumps(
        [{"input_text": s.input_text, "expected": s.expected} for s in seeds],
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def parse_example_blocks(raw: str, schema: SchemaDoc) -> tuple[list[SyntheticCase], int]:
    """Parse <example> blocks; malformed blocks are skipped and counted."""
    cases: list[SyntheticCase] = []
    skipped = 0
    for block in re.findall(r"<example>(.*?)</example>", raw, re.DOTALL):
        input_text = _extract_tag(block, "input_text")
        ground_raw = _extract_tag(block, "ground_truth")
        challenge = _extract_tag(block, "challenge") or ""
        if input_text is None or ground_raw is None or not input_text.strip():
            skipped += 1
            continue
        stripped = ground_raw.strip().strip('"')
        if stripped == INSUFFICIENT_SCHEMA:
            cases.append(SyntheticCase(input_text=input_text, ground_truth=INSUFFICIENT_SCHEMA, challenge=challenge))
            continue
        try:
            tree = json.loads(ground_raw)
            if not isinstance(tree, dict):
                raise ValueError("ground truth must be a JSON object")
            check_shape(tree, schema)
        except (ValueError, ShapeViolation):
            skipped += 1
            continue
        cases.append(SyntheticCase(input_text=input_text, ground_truth=tree, challenge=challenge))
    return cases, skipped


def _normalized_key(text: str) -> str:
    return re.sub(r"\s+", " ", text.casefold()).strip()


def generate_synthetic_cases(
    schema: SchemaDoc,
    task: str,
    seeds: Sequence[SeedSample],
    n_samples: int,
    backend: ModelBackend,
    round_cap: int = GENERATION_ROUND_CAP,
) -> list[SyntheticCase]:
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    base_prompt = render_synthetic_prompt(schema, task, serialize_seeds(seeds))
    collected: dict[str, SyntheticCase] = {}
    for round_no in range(round_cap):
        prompt = base_prompt
        if round_no:
            prompt += (
                f"\n\nYou already produced {len(collected)} distinct examples. "
                "Generate additional examples different from all previous ones. "
                f"(round {round_no + 1})"
            )
        response = backend.complete(ChatRequest.of(prompt))
        cases, _ = parse_example_blocks(response.text, schema)
        for case in cases:
            collected.setdefault(_normalized_key(case.input_text), case)
        if len(collected) >= n_samples:
            return list(collected.values())
    raise InsufficientGeneration(len(collected), n_samples)


# --- evaluation -----------------------------------------------------------------------


def _required_all_null(values: Any, schema: SchemaDoc) -> bool:
    def walk(spec: AttributeSpec, value: Any) -> bool:
        if spec.kind == "object":
            v_map = value if isinstance(value, dict) else {}
            return all(
                walk(spec.children[name], v_map.get(name)) for name in spec.required_children
            )
        if spec.kind == "array":
            if value is None:
                return True
            if isinstance(value, list):
                return all(walk(spec.item, element) for element in value)
            return False
        return value is None

    return walk(schema.root, values)


def _outcome_summary(outcome: ExtractionOutcome) -> dict:
    summary: dict[str, Any] = {"retries_used": outcome.retries_used, "succeeded": outcome.succeeded}
    if isinstance(outcome.final, ExtractionCandidate):
        summary["predicted"] = outcome.final.values
    else:
        summary["failure_reason"] = outcome.final.reason
        if outcome.final.last_report is not None:
            summary["findings"] = [
                {"stage": f.stage.value, "path": f.path, "code": f.code.value, "detail": f.detail}
                for f in outcome.final.last_report.findings()
            ]
    return summary


def evaluate_schema(
    schema: SchemaDoc,
    cases: Sequence[SyntheticCase],
    backend: ModelBackend,
    engine: EngineConfig = EngineConfig(),
) -> tuple[float, list[FailureRecord]]:
    if not cases:
        raise ValueError("cases must be non-empty")
    correct = 0
    failures: list[FailureRecord] = []
    for case in cases:
        request = ExtractionRequest(
            source_text=case.input_text,
            schema=schema,
            max_retries=engine.max_retries,
            reflection_enabled=engine.reflection_enabled,
            llm_condition_check=engine.llm_condition_check,
        )
        outcome = extract(request, backend)
        if case.insufficient:
            ok = (not outcome.succeeded) or _required_all_null(outcome.final.values, schema)
            if ok:
                correct += 1
            else:
                failures.append(
                    FailureRecord(
                        case=case,
                        summary=_outcome_summary(outcome),
                        mismatch_paths=(),
                        schema_insufficiency=True,
                    )
                )
            continue
        if outcome.succeeded:
            ok, per_field = strict_compare(case.ground_truth, outcome.final.values, schema)
            mismatch_paths = tuple(p for p, s in sorted(per_field.items()) if s != "match")
        else:
            ok, mismatch_paths = False, ()
        if ok:
            correct += 1
        else:
            failures.append(
                FailureRecord(case=case, summary=_outcome_summary(outcome), mismatch_paths=mismatch_paths)
            )
    return correct / len(cases), failures


# --- refinement ---------------------------------------------------------------------------


def serialize_failures(failures: Sequence[FailureRecord]) -> str:
    return json.dumps(
        [
            {
                "input_text": f.case.input_text,
                "ground_truth": f.case.ground_truth,
                "challenge": f.case.challenge,
                "outcome": f.summary,
                "mismatch_paths": list(f.mismatch_paths),
                "schema_insufficiency": f.schema_insufficiency,
            }
            for f in failures
        ],
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def refine_schema(state: RefinementState, task: str, backend: ModelBackend) -> SchemaDoc:
    if not state.iterations:
        raise ValueError("state has no iterations")
    last = state.iterations[-1]
    if not last.failures:
        raise ValueError("last iteration has no failures; nothing to refine against")
    prompt = render_refiner_prompt(last.schema, task, serialize_failures(last.failures))
    last_error = None
    for _ in range(DIALECT_REPAIR_ATTEMPTS + 1):
        response = backend.complete(ChatRequest.of(prompt))
        try:
            schema = _parse_tagged_schema(response.text, "refined_schema")
            return SchemaDoc(schema.root, schema.version_tag, task_hint=task)
        except SchemaDialectError as exc:
            last_error = f"{type(exc).__name__}: {exc}"
            prompt = (
                f"{prompt}\n\nYour previous schema was rejected: {last_error}. "
                "Emit a corrected schema in <refined_schema></refined_schema> tags."
            )
    raise RefinementFailed(f"no dialect-valid schema after repairs: {last_error}")


# --- the loop -------------------------------------------------------------------------------


def optimize(
    user_schema: Optional[SchemaDoc],
    task: str,
    seeds: Sequence[SeedSample],
    config: OptimizeConfig,
    backend: ModelBackend,
) -> tuple[SchemaDoc, RefinementState]:
    state = RefinementState(tau=config.tau, max_iters=config.max_iters)
    try:
        current = user_schema if user_schema is not None else generate_initial_schema(task, backend)
        holdout_n = config.holdout_samples or config.n_samples
        holdout = generate_synthetic_cases(current, task, seeds, holdout_n, backend)
        previous: Optional[SchemaDoc] = None

        for iteration in range(config.max_iters + 1):
            if iteration == 0:
                train_cases = holdout  # first iteration trains on the hold-out itself
            else:
                train_cases = generate_synthetic_cases(
                    current, task, seeds, config.n_samples, backend
                )
            _, failures = evaluate_schema(current, train_cases, backend, config.engine)
            if train_cases is holdout:
                val_accuracy = 1.0 - len(failures) / len(holdout)
            else:
                val_accuracy, _ = evaluate_schema(current, holdout, backend, config.engine)
            diff = diff_schemas(previous, current) if previous is not None else SchemaDiff(())
            state.iterations.append(
                IterationRecord(
                    schema=current,
                    val_accuracy=val_accuracy,
                    failures=tuple(failures),
                    diff_from_prev=diff,
                )
            )
            if val_accuracy >= config.tau:
                break
            if iteration == config.max_iters or not failures:
                break
            previous = current
            current = refine_schema(state, task, backend)

        best = state.iterations[state.best_index].schema
        return best, state
    except StrexError as exc:
        raise OptimizationFailed(str(exc), state=state) from exc
