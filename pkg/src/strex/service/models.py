"""Pydantic request/response models and JSON serializers for the service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

from ..backends import (
    ChatExchange,
    LiveBackend,
    LiveConfig,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptedPolicy,
)
from ..extraction import ExtractionOutcome
from ..guardrails import ExtractionCandidate, ValidationReport


class LiveSpec(BaseModel):
    endpoint: str
    model: str
    timeout: float = 60.0
    transport_retries: int = 2


class BackendSpec(BaseModel):
    kind: Literal["scripted", "replay", "live"]
    policy: Optional[dict] = None
    cassette: Optional[list[dict]] = None
    live: Optional[LiveSpec] = None
    record: bool = False


def build_backend(spec: BackendSpec):
    """Returns (backend, recorded sink or None)."""
    if spec.kind == "scripted":
        if spec.policy is None:
            raise ValueError("scripted backend needs a policy")
        backend = ScriptedBackend(ScriptedPolicy.from_dict(spec.policy))
    elif spec.kind == "replay":
        entries = [
            ChatExchange(
                fingerprint=e["fingerprint"], request=e["request"], response=e["response"]
            )
            for e in (spec.cassette or [])
        ]
        backend = ReplayBackend(entries)
    else:
        if spec.live is None:
            raise ValueError("live backend needs live config")
        backend = LiveBackend(
            LiveConfig(
                endpoint=spec.live.endpoint,
                model=spec.live.model,
                timeout=spec.live.timeout,
                transport_retries=spec.live.transport_retries,
            )
        )
    recorded: Optional[list] = None
    if spec.record:
        recorded = []
        backend = RecordingBackend(backend, recorded)
    return backend, recorded


def recorded_to_dicts(recorded: Optional[list]) -> Optional[list[dict]]:
    if recorded is None:
        return None
    return [
        {"fingerprint": e.fingerprint, "request": e.request, "response": e.response}
        for e in recorded
    ]


class EngineSpec(BaseModel):
    max_retries: int = 3
    reflection_enabled: bool = True
    llm_condition_check: bool = False


class SchemaParseRequest(BaseModel):
    schema_text: Optional[str] = None
    schema_value: Optional[Any] = None


class SchemaDiffRequest(BaseModel):
    before: Any
    after: Any


class ValidateRequest(BaseModel):
    schema_value: Any = Field(alias="schema")
    candidate: dict
    source_text: str = ""

    model_config = {"populate_by_name": True}


class ExtractApiRequest(BaseModel):
    schema_value: Any = Field(alias="schema")
    source_text: str
    max_retries: int = 3
    reflection_enabled: bool = True
    llm_condition_check: bool = False
    backend: BackendSpec
    relay_program: Optional[dict] = None

    model_config = {"populate_by_name": True}


class SeedSpec(BaseModel):
    input_text: str
    expected: dict


class BuildRequest(BaseModel):
    task: str
    schema_value: Optional[Any] = Field(default=None, alias="schema")
    seeds: list[SeedSpec] = []
    tau: float = 0.95
    max_iters: int = 6
    n_samples: int = 10
    holdout_samples: Optional[int] = None
    engine: EngineSpec = EngineSpec()
    backend: BackendSpec
    relay: bool = True
    relay_pairs: int = 8

    model_config = {"populate_by_name": True}


class EvalRequest(BaseModel):
    dataset_lines: list[str]
    format: Literal["conversation-jsonl", "page-jsonl"] = "conversation-jsonl"
    schema_value: Any = Field(alias="schema")
    config: EngineSpec = EngineSpec()
    ab_config: Optional[EngineSpec] = None
    sample_cap: Optional[int] = None
    backend: BackendSpec

    model_config = {"populate_by_name": True}


class RelayCheckRequest(BaseModel):
    program: dict
    pairs: list[dict]
    backend: Optional[BackendSpec] = None
    max_rounds: int = 0


class RelayApplyRequest(BaseModel):
    program: dict
    value: dict


# --- serializers ----------------------------------------------------------------


def report_to_dict(report: ValidationReport) -> dict:
    return {
        "overall": "pass" if report.overall else "fail",
        "stages": [
            {
                "stage": s.stage.value,
                "status": "pass" if s.passed else "fail",
                "findings": [
                    {
                        "stage": f.stage.value,
                        "path": f.path,
                        "code": f.code.value,
                        "detail": f.detail,
                        "offending_value": f.offending_value,
                    }
                    for f in s.findings
                ],
            }
            for s in report.stages
        ],
    }


def outcome_to_dict(outcome: ExtractionOutcome) -> dict:
    out: dict[str, Any] = {
        "succeeded": outcome.succeeded,
        "retries_used": outcome.retries_used,
        "wall_time": outcome.wall_time,
        "backend_time": outcome.backend_time,
        "attempts": [
            {
                "raw_response": a.raw_response,
                "parsed": a.candidate.values if a.candidate is not None else None,
                "report": report_to_dict(a.report) if a.report is not None else None,
                "parse_error": a.parse_error,
                "reflection": a.reflection.text if a.reflection is not None else None,
            }
            for a in outcome.attempts
        ],
    }
    if isinstance(outcome.final, ExtractionCandidate):
        out["values"] = outcome.final.values
    else:
        out["failure"] = {
            "reason": outcome.final.reason,
            "last_error": outcome.final.last_error,
            "last_report": report_to_dict(outcome.final.last_report)
            if outcome.final.last_report is not None
            else None,
        }
    return out
