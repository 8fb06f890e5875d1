"""Guardrailed structured extraction with schema refinement and
backward-compatible output mapping."""

from .schema import (
    AttributeSpec,
    ChangeCategory,
    SchemaDiff,
    SchemaDoc,
    canonical_serialize,
    diff_category_histogram,
    diff_schemas,
    parse_schema,
)
from .guardrails import (
    ExtractionCandidate,
    Finding,
    FindingCode,
    ReflectionNote,
    Stage,
    ValidationReport,
    build_reflection,
    check_grounding,
    check_missing_attributes,
    check_rules,
    validate,
)
from .extraction import ExtractionOutcome, ExtractionRequest, Failure, extract, parse_response
from .refinement import OptimizeConfig, RefinementState, SeedSample, SyntheticCase, optimize
from .transform import SamplePair, TransformProgram, apply_transform, verify_and_repair
from .metrics import EngineConfig, RunReport, run_eval, strict_compare

__version__ = "0.1.0"

__all__ = [
    "AttributeSpec",
    "ChangeCategory",
    "EngineConfig",
    "ExtractionCandidate",
    "ExtractionOutcome",
    "ExtractionRequest",
    "Failure",
    "Finding",
    "FindingCode",
    "OptimizeConfig",
    "RefinementState",
    "ReflectionNote",
    "RunReport",
    "SamplePair",
    "SchemaDiff",
    "SchemaDoc",
    "SeedSample",
    "Stage",
    "SyntheticCase",
    "TransformProgram",
    "ValidationReport",
    "apply_transform",
    "build_reflection",
    "canonical_serialize",
    "check_grounding",
    "check_missing_attributes",
    "check_rules",
    "diff_category_histogram",
    "diff_schemas",
    "extract",
    "optimize",
    "parse_response",
    "parse_schema",
    "run_eval",
    "strict_compare",
    "validate",
    "verify_and_repair",
]
