"""HTTP service exposing extraction, schema optimization, evaluation, and
output-mapping over JSON. State-free: every request carries its own schema,
data, and backend description."""

from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..datasets import parse_dataset_lines
from ..errors import SchemaDialectError, StrexError
from ..extraction import ExtractionRequest, extract
from ..guardrails import ExtractionCandidate, build_reflection, validate
from ..metrics import EngineConfig, ab_delta, run_eval
from ..refinement import OptimizeConfig, SeedSample, optimize
from ..schema import (
    canonical_serialize,
    diff_category_histogram,
    diff_schemas,
    parse_schema,
    schema_from_value,
    schemas_equal,
)
from ..transform import (
    SamplePair,
    apply_transform,
    generate_sample_pairs,
    identity_program,
    load_program,
    propose_transform,
    verify_and_repair,
    _failing_pairs,
)
from .models import (
    BuildRequest,
    EvalRequest,
    ExtractApiRequest,
    RelayApplyRequest,
    RelayCheckRequest,
    SchemaDiffRequest,
    SchemaParseRequest,
    ValidateRequest,
    build_backend,
    outcome_to_dict,
    recorded_to_dicts,
    report_to_dict,
)


def _load_schema(value: Any):
    if isinstance(value, str):
        return parse_schema(value)
    return schema_from_value(value)


def _engine(spec) -> EngineConfig:
    return EngineConfig(
        max_retries=spec.max_retries,
        reflection_enabled=spec.reflection_enabled,
        llm_condition_check=spec.llm_condition_check,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="strex", version=__version__)

    @app.exception_handler(StrexError)
    async def strex_error_handler(_: Request, exc: StrexError) -> JSONResponse:
        status = 422 if isinstance(exc, SchemaDialectError) else 400
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(ValueError)
    async def value_error_handler(_: Request, exc: ValueError) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"error": "ValueError", "detail": str(exc)}
        )

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/schema/parse")
    def schema_parse(req: SchemaParseRequest) -> dict:
        if req.schema_text is not None:
            schema = parse_schema(req.schema_text)
        elif req.schema_value is not None:
            schema = _load_schema(req.schema_value)
        else:
            raise ValueError("provide schema_text or schema_value")
        return {
            "canonical": json.loads(canonical_serialize(schema)),
            "version_tag": schema.version_tag,
        }

    @app.post("/schema/diff")
    def schema_diff(req: SchemaDiffRequest) -> dict:
        before = _load_schema(req.before)
        after = _load_schema(req.after)
        diff = diff_schemas(before, after)
        histogram = diff_category_histogram([diff])
        return {
            "changes": [
                {
                    "path": c.path,
                    "category": c.category.value,
                    "before": c.before,
                    "after": c.after,
                }
                for c in diff.changes
            ],
            "histogram": {k.value: v for k, v in histogram.items()},
        }

    @app.post("/validate")
    def validate_candidate(req: ValidateRequest) -> dict:
        schema = _load_schema(req.schema_value)
        candidate = ExtractionCandidate(
            values=req.candidate, source_text=req.source_text, schema=schema
        )
        report = validate(candidate, schema)
        out = report_to_dict(report)
        if not report.overall:
            out["reflection"] = build_reflection(report, schema).text
        return out

    @app.post("/extract")
    def extract_endpoint(req: ExtractApiRequest) -> dict:
        schema = _load_schema(req.schema_value)
        backend, recorded = build_backend(req.backend)
        outcome = extract(
            ExtractionRequest(
                source_text=req.source_text,
                schema=schema,
                max_retries=req.max_retries,
                reflection_enabled=req.reflection_enabled,
                llm_condition_check=req.llm_condition_check,
            ),
            backend,
        )
        out = outcome_to_dict(outcome)
        if req.relay_program is not None and outcome.succeeded:
            program = load_program(req.relay_program)
            out["relayed_values"] = apply_transform(program, outcome.final.values)
        if recorded is not None:
            out["recorded"] = recorded_to_dicts(recorded)
        return out

    @app.post("/build")
    def build_endpoint(req: BuildRequest) -> dict:
        backend, recorded = build_backend(req.backend)
        user_schema = _load_schema(req.schema_value) if req.schema_value is not None else None
        seeds = [SeedSample(input_text=s.input_text, expected=s.expected) for s in req.seeds]
        config = OptimizeConfig(
            tau=req.tau,
            max_iters=req.max_iters,
            n_samples=req.n_samples,
            holdout_samples=req.holdout_samples,
            engine=_engine(req.engine),
        )
        best, state = optimize(user_schema, req.task, seeds, config, backend)
        out: dict[str, Any] = {
            "best_schema": json.loads(canonical_serialize(best)),
            "best_version_tag": best.version_tag,
            "state": state.to_json_dict(),
        }
        if req.relay:
            if user_schema is None or schemas_equal(best, user_schema):
                program = identity_program(best)
            else:
                pairs, _ = generate_sample_pairs(best, user_schema, backend, n=req.relay_pairs)
                program = propose_transform(best, user_schema, pairs, backend)
                program = verify_and_repair(program, pairs, backend)
            out["relay_program"] = program.to_json_dict()
        if recorded is not None:
            out["recorded"] = recorded_to_dicts(recorded)
        return out

    @app.post("/eval")
    def eval_endpoint(req: EvalRequest) -> dict:
        schema = _load_schema(req.schema_value)
        backend, recorded = build_backend(req.backend)
        samples = parse_dataset_lines(req.dataset_lines, req.format, schema, req.sample_cap)
        report, _ = run_eval(samples, schema, _engine(req.config), backend)
        out: dict[str, Any] = {"report": report.to_json_dict()}
        if req.ab_config is not None:
            report_b, _ = run_eval(samples, schema, _engine(req.ab_config), backend)
            out["report_b"] = report_b.to_json_dict()
            out["delta"] = ab_delta(report, report_b)
        if recorded is not None:
            out["recorded"] = recorded_to_dicts(recorded)
        return out

    @app.post("/relay/check")
    def relay_check(req: RelayCheckRequest) -> dict:
        program = load_program(req.program)
        pairs = [
            SamplePair(
                optimized_output=p["optimized_output"],
                expected_original=p["expected_original"],
            )
            for p in req.pairs
        ]
        failing = _failing_pairs(program, pairs)
        out: dict[str, Any] = {
            "verified": not failing,
            "pair_count": len(pairs),
            "failing": [
                {"optimized_output": pair.optimized_output, "reason": reason}
                for pair, reason in failing
            ],
        }
        if failing and req.backend is not None and req.max_rounds > 0:
            backend, recorded = build_backend(req.backend)
            repaired = verify_and_repair(program, pairs, backend, max_rounds=req.max_rounds)
            out["verified"] = True
            out["repaired_program"] = repaired.to_json_dict()
            if recorded is not None:
                out["recorded"] = recorded_to_dicts(recorded)
        return out

    @app.post("/relay/apply")
    def relay_apply(req: RelayApplyRequest) -> dict:
        program = load_program(req.program)
        return {"result": apply_transform(program, req.value)}

    return app


app = create_app()
