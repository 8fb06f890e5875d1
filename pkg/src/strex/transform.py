"""Declarative output mapping from an optimized schema back to the original.

Programs are sequences of closed, interpretable steps (no generated code is
ever executed). Array-crossing paths use "[]" segments; a step maps array
elements pairwise when both its source and destination contain "[]".
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterator, Optional, Sequence

from .backends import ChatRequest, ModelBackend
from .errors import (
    InsufficientPairs,
    ProposalInvalid,
    ShapeViolation,
    StepFailure,
    VerificationFailed,
)
from .guardrails import check_shape
from .metrics import trees_equal
from .schema import SchemaDoc, canonical_serialize, compile_pattern, segments

OPS = ("rename", "move", "concat", "split_regex", "constant", "cast_number_to_string", "drop")

PAIR_ROUND_CAP = 5
DEFAULT_VERIFY_PAIRS = 8

_PLACEHOLDER = re.compile(r"\{([^{}:]+)(?::([^{}]*))?\}")


@dataclass(frozen=True)
class TransformStep:
    op: str
    args: dict

    def to_dict(self) -> dict:
        return {"op": self.op, **self.args}

    @staticmethod
    def from_dict(data: dict) -> "TransformStep":
        if not isinstance(data, dict) or "op" not in data:
            raise ProposalInvalid(f"step must be an object with an 'op': {data!r}")
        op = data["op"]
        if op not in OPS:
            raise ProposalInvalid(f"unknown op {op!r}")
        args = {k: v for k, v in data.items() if k != "op"}
        return TransformStep(op=op, args=args)


@dataclass(frozen=True)
class TransformProgram:
    steps: tuple[TransformStep, ...]
    source_schema: SchemaDoc
    target_schema: SchemaDoc

    def to_json_dict(self) -> dict:
        return {
            "source_schema": json.loads(canonical_serialize(self.source_schema)),
            "target_schema": json.loads(canonical_serialize(self.target_schema)),
            "steps": [s.to_dict() for s in self.steps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True, ensure_ascii=False)


def _require_path(schema: SchemaDoc, path: Any, side: str) -> str:
    if not isinstance(path, str) or not path.startswith("/") and path != "":
        raise ProposalInvalid(f"{side} path must be a /-prefixed string, got {path!r}")
    if schema.spec_at(path) is None:
        raise ProposalInvalid(f"{side} path {path} not present in {side} schema")
    return path


def _validate_step(step: TransformStep, source: SchemaDoc, target: SchemaDoc) -> None:
    a = step.args
    if step.op in ("rename", "move"):
        _require_path(source, a.get("src"), "source")
        _require_path(target, a.get("dst"), "target")
    elif step.op == "concat":
        _require_path(target, a.get("dst"), "target")
        template = a.get("template")
        if not isinstance(template, str):
            raise ProposalInvalid("concat needs a string template")
        placeholders = _PLACEHOLDER.findall(template)
        if not placeholders:
            raise ProposalInvalid("concat template has no path placeholders")
        for path, _ in placeholders:
            _require_path(source, path, "source")
    elif step.op == "split_regex":
        _require_path(source, a.get("src"), "source")
        pattern = a.get("pattern")
        if not isinstance(pattern, str):
            raise ProposalInvalid("split_regex needs a string pattern")
        try:
            compiled = compile_pattern(pattern)
        except re.error as exc:
            raise ProposalInvalid(f"split_regex pattern invalid: {exc}") from None
        groups = a.get("groups")
        if not isinstance(groups, dict) or not groups:
            raise ProposalInvalid("split_regex needs a non-empty group->path map")
        for key, dst in groups.items():
            if key.isdigit():
                if int(key) > compiled.groups:
                    raise ProposalInvalid(f"group {key} not present in pattern")
            elif key not in compiled.groupindex:
                raise ProposalInvalid(f"named group {key!r} not present in pattern")
            _require_path(target, dst, "target")
    elif step.op == "constant":
        _require_path(target, a.get("dst"), "target")
        if "value" not in a:
            raise ProposalInvalid("constant needs a value")
    elif step.op == "cast_number_to_string":
        _require_path(source, a.get("src"), "source")
        _require_path(target, a.get("dst"), "target")
    elif step.op == "drop":
        _require_path(source, a.get("src"), "source")


def build_program(
    steps: Sequence[TransformStep], source_schema: SchemaDoc, target_schema: SchemaDoc
) -> TransformProgram:
    for step in steps:
        _validate_step(step, source_schema, target_schema)
    return TransformProgram(steps=tuple(steps), source_schema=source_schema, target_schema=target_schema)


def load_program(data: dict) -> TransformProgram:
    from .schema import schema_from_value

    try:
        source = schema_from_value(data["source_schema"])
        target = schema_from_value(data["target_schema"])
        steps = [TransformStep.from_dict(s) for s in data["steps"]]
    except (KeyError, TypeError) as exc:
        raise ProposalInvalid(f"malformed program document: {exc}") from None
    return build_program(steps, source, target)


@dataclass(frozen=True)
class SamplePair:
    optimized_output: dict
    expected_original: dict


# --- path resolution over value trees ---------------------------------------------


def _bindings(tree: Any, segs: list[str]) -> Iterator[tuple[tuple[int, ...], Any]]:
    """Yield (array index bindings, value) for a path; '[]' fans out."""
    if not segs:
        yield (), tree
        return
    head, rest = segs[0], segs[1:]
    if head == "[]":
        if isinstance(tree, list):
            for i, element in enumerate(tree):
                for indices, value in _bindings(element, rest):
                    yield (i,) + indices, value
        return
    child = tree.get(head) if isinstance(tree, dict) else None
    yield from _bindings(child, rest)


def _resolve_at(tree: Any, segs: list[str], indices: tuple[int, ...]) -> Any:
    it = iter(indices)
    node = tree
    for seg in segs:
        if seg == "[]":
            i = next(it, None)
            if not isinstance(node, list) or i is None or i >= len(node):
                return None
            node = node[i]
        else:
            node = node.get(seg) if isinstance(node, dict) else None
    return node


def _write_path(target: dict, segs: list[str], indices: tuple[int, ...], value: Any) -> None:
    """Write value at a path, materializing objects and array slots on the way."""
    it = iter(indices)
    node: Any = target
    i = 0
    while i < len(segs):
        seg = segs[i]
        is_last = i == len(segs) - 1
        if seg == "[]":
            raise StepFailure(-1, "path cannot begin with []")
        follows_array = not is_last and segs[i + 1] == "[]"
        if is_last:
            node[seg] = value
            return
        if follows_array:
            idx = next(it)
            arr = node.get(seg)
            if not isinstance(arr, list):
                arr = []
                node[seg] = arr
            while len(arr) <= idx:
                arr.append({})
            if i + 1 == len(segs) - 1:
                arr[idx] = value
                return
            if not isinstance(arr[idx], dict):
                arr[idx] = {}
            node = arr[idx]
            i += 2
            continue
        child = node.get(seg)
        if not isinstance(child, dict):
            child = {}
            node[seg] = child
        node = child
        i += 1


# --- application ------------------------------------------------------------------


def _format_value(value: Any, spec: str) -> str:
    if spec:
        return format(value, spec)
    return value if isinstance(value, str) else json.dumps(value, ensure_ascii=False)


def _apply_step(step: TransformStep, source: Any, target: dict, index: int) -> None:
    a = step.args
    if step.op == "drop":
        return
    if step.op == "constant":
        _write_path(target, segments(a["dst"]), (), a["value"])
        return
    if step.op == "concat":
        placeholders = _PLACEHOLDER.findall(a["template"])
        primary_segs = segments(placeholders[0][0])
        for indices, _ in _bindings(source, primary_segs):
            values = {}
            any_null = False
            for path, _spec in placeholders:
                v = _resolve_at(source, segments(path), indices)
                if v is None:
                    any_null = True
                values[path] = v
            if any_null:
                result: Any = None
            else:
                def render(m: re.Match) -> str:
                    value = values[m.group(1)]
                    try:
                        return _format_value(value, m.group(2) or "")
                    except (ValueError, TypeError) as exc:
                        raise StepFailure(index, f"cannot format {value!r}: {exc}") from None

                result = _PLACEHOLDER.sub(render, a["template"])
            _write_path(target, segments(a["dst"]), indices, result)
        return
    # remaining ops all read one src path
    src_segs = segments(a["src"])
    for indices, value in _bindings(source, src_segs):
        if step.op in ("rename", "move"):
            _write_path(target, segments(a["dst"]), indices, value)
        elif step.op == "cast_number_to_string":
            if value is None:
                out: Any = None
            elif isinstance(value, (int, float)) and not isinstance(value, bool):
                try:
                    out = format(value, a.get("format", ""))
                except ValueError as exc:
                    raise StepFailure(index, f"bad format spec: {exc}") from None
            else:
                raise StepFailure(index, f"cast_number_to_string on non-number {value!r}")
            _write_path(target, segments(a["dst"]), indices, out)
        elif step.op == "split_regex":
            if value is None:
                for dst in a["groups"].values():
                    _write_path(target, segments(dst), indices, None)
                continue
            if not isinstance(value, str):
                raise StepFailure(index, f"split_regex on non-string {value!r}")
            match = compile_pattern(a["pattern"]).fullmatch(value)
            if match is None:
                raise StepFailure(index, f"split_regex pattern did not match {value!r}")
            for key, dst in a["groups"].items():
                group = match.group(int(key) if key.isdigit() else key)
                _write_path(target, segments(dst), indices, group)


def _fill_missing_nulls(spec, value: Any) -> Any:
    if spec.kind == "object":
        out = dict(value) if isinstance(value, dict) else {}
        for name, child in spec.children.items():
            out[name] = _fill_missing_nulls(child, out.get(name))
        return out
    if spec.kind == "array":
        if isinstance(value, list):
            return [_fill_missing_nulls(spec.item, element) for element in value]
        return value
    return value


def apply_transform(program: TransformProgram, value: dict) -> dict:
    """Pure, deterministic application; raises StepFailure on any bad step."""
    try:
        check_shape(value, program.source_schema)
    except ShapeViolation as exc:
        raise StepFailure(-1, f"input not shape-valid: {exc}") from None
    if not program.steps:
        # the empty program over identical schemas is the identity map
        target = json.loads(json.dumps(value))
        try:
            check_shape(target, program.target_schema)
        except ShapeViolation as exc:
            raise StepFailure(-1, f"output not shape-valid: {exc}") from None
        return target
    target = {}
    for i, step in enumerate(program.steps):
        try:
            _apply_step(step, value, target, i)
        except StepFailure:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise StepFailure(i, f"{type(exc).__name__}: {exc}") from None
    target = _fill_missing_nulls(program.target_schema.root, target)
    try:
        check_shape(target, program.target_schema)
    except ShapeViolation as exc:
        raise StepFailure(-1, f"output not shape-valid: {exc}") from None
    return target


# --- proposal, pair generation, verification -------------------------------------------

_STEP_GRAMMAR = """Each step is a JSON object; allowed forms:
{"op":"rename","src":"/path","dst":"/path"}
{"op":"move","src":"/path","dst":"/path"}
{"op":"concat","dst":"/path","template":"{/src_a}{/src_b:,}"}
{"op":"split_regex","src":"/path","pattern":"^(...)$","groups":{"1":"/path"}}
{"op":"constant","dst":"/path","value":<literal>}
{"op":"cast_number_to_string","src":"/path","dst":"/path","format":","}
{"op":"drop","src":"/path"}
Array-crossing paths use "[]" segments and map element-wise."""


def _serialize_pairs(pairs: Sequence[SamplePair]) -> str:
    return json.dumps(
        [
            {"optimized_output": p.optimized_output, "expected_original": p.expected_original}
            for p in pairs
        ],
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
    )


def _proposal_prompt(s_star: SchemaDoc, s_user: SchemaDoc, pairs: Sequence[SamplePair]) -> str:
    return (
        "You translate extraction outputs from an optimized schema back to the "
        "original schema by emitting a transformation program.\n\n"
        f"Optimized (source) schema: {canonical_serialize(s_star)}\n"
        f"Original (target) schema: {canonical_serialize(s_user)}\n\n"
        f"Program grammar:\n{_STEP_GRAMMAR}\n\n"
        f"Sample pairs the program must satisfy: {_serialize_pairs(pairs)}\n\n"
        "Return the program as a JSON array of steps inside "
        "<transform_program></transform_program> tags."
    )


def _parse_program_response(raw: str, s_star: SchemaDoc, s_user: SchemaDoc) -> TransformProgram:
    m = re.search(r"<transform_program>(.*?)</transform_program>", raw, re.DOTALL)
    if m is None:
        raise ProposalInvalid("no <transform_program> block in response")
    try:
        data = json.loads(m.group(1).strip())
    except json.JSONDecodeError as exc:
        raise ProposalInvalid(f"program is not JSON: {exc}") from None
    if not isinstance(data, list):
        raise ProposalInvalid("program must be a JSON array of steps")
    steps = [TransformStep.from_dict(s) for s in data]
    return build_program(steps, s_star, s_user)


def propose_transform(
    s_star: SchemaDoc, s_user: SchemaDoc, pairs: Sequence[SamplePair], backend: ModelBackend
) -> TransformProgram:
    if not pairs:
        raise ValueError("at least one sample pair required")
    response = backend.complete(ChatRequest.of(_proposal_prompt(s_star, s_user, pairs)))
    return _parse_program_response(response.text, s_star, s_user)


def generate_sample_pairs(
    s_star: SchemaDoc,
    s_user: SchemaDoc,
    backend: ModelBackend,
    n: int = DEFAULT_VERIFY_PAIRS,
    round_cap: int = PAIR_ROUND_CAP,
) -> tuple[list[SamplePair], int]:
    """Returns (pairs, skipped count of malformed pairs)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    base_prompt = (
        "Generate realistic sample data pairs for testing a schema-to-schema "
        "transformation.\n\n"
        f"Optimized (source) schema: {canonical_serialize(s_star)}\n"
        f"Original (target) schema: {canonical_serialize(s_user)}\n\n"
        f"Produce at least {n} pairs. For each pair emit:\n"
        "<pair><optimized>{...}</optimized><original>{...}</original></pair>"
    )
    pairs: list[SamplePair] = []
    seen: set[str] = set()
    skipped = 0
    for round_no in range(round_cap):
        prompt = base_prompt
        if round_no:
            prompt += f"\n\nGenerate additional, different pairs. (round {round_no + 1})"
        response = backend.complete(ChatRequest.of(prompt))
        for block in re.findall(r"<pair>(.*?)</pair>", response.text, re.DOTALL):
            opt_m = re.search(r"<optimized>(.*?)</optimized>", block, re.DOTALL)
            orig_m = re.search(r"<original>(.*?)</original>", block, re.DOTALL)
            if opt_m is None or orig_m is None:
                skipped += 1
                continue
            try:
                optimized = json.loads(opt_m.group(1).strip())
                original = json.loads(orig_m.group(1).strip())
                check_shape(optimized, s_star)
                check_shape(original, s_user)
            except (ValueError, ShapeViolation):
                skipped += 1
                continue
            key = json.dumps(optimized, sort_keys=True)
            if key not in seen:
                seen.add(key)
                pairs.append(SamplePair(optimized_output=optimized, expected_original=original))
        if len(pairs) >= n:
            return pairs, skipped
    raise InsufficientPairs(len(pairs), n)


def _failing_pairs(program: TransformProgram, pairs: Sequence[SamplePair]) -> list[tuple[SamplePair, str]]:
    failing = []
    for pair in pairs:
        try:
            produced = apply_transform(program, pair.optimized_output)
        except StepFailure as exc:
            failing.append((pair, f"step failure: {exc}"))
            continue
        if not trees_equal(pair.expected_original, produced, program.target_schema):
            failing.append((pair, f"produced {json.dumps(produced, sort_keys=True)}"))
    return failing


def verify_and_repair(
    program: TransformProgram,
    pairs: Sequence[SamplePair],
    backend: ModelBackend,
    max_rounds: int = 3,
) -> TransformProgram:
    failing = _failing_pairs(program, pairs)
    if not failing:
        return program
    current = program
    for _ in range(max_rounds):
        pair, reason = failing[0]
        prompt = (
            f"{_proposal_prompt(current.source_schema, current.target_schema, list(pairs))}\n\n"
            f"The current program {json.dumps([s.to_dict() for s in current.steps])} fails on "
            f"input {json.dumps(pair.optimized_output, sort_keys=True)}: expected "
            f"{json.dumps(pair.expected_original, sort_keys=True)} but {reason}. "
            "Emit a corrected program."
        )
        response = backend.complete(ChatRequest.of(prompt))
        try:
            current = _parse_program_response(
                response.text, current.source_schema, current.target_schema
            )
        except ProposalInvalid:
            continue
        failing = _failing_pairs(current, pairs)
        if not failing:
            return current
    raise VerificationFailed([pair for pair, _ in failing])


def identity_program(schema: SchemaDoc) -> TransformProgram:
    """The empty step list over identical schemas: apply is the identity map."""
    return build_program((), schema, schema)
