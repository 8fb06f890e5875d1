"""Restricted-dialect schema documents: parse, canonicalize, diff.

The dialect is a small subset of JSON Schema. Each node may only use the
allowed keys below; `if`/`else`/`anyOf`/`allOf` are rejected outright at any
depth. Patterns must stay within a regular (backtracking-safe) subset.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional

from .errors import (
    ForbiddenKey,
    InvalidAttribute,
    InvalidBounds,
    InvalidPattern,
    MalformedDocument,
    UnknownKey,
)

KINDS = ("string", "number", "integer", "boolean", "object", "array")

ALLOWED_KEYS = frozenset(
    {
        "name",
        "description",
        "type",
        "enum",
        "properties",
        "title",
        "pattern",
        "minLength",
        "maxLength",
        "condition",
        "required",
        "items",
        "allowed_date_formats",
        "delimiter",
    }
)

FORBIDDEN_KEYS = frozenset({"if", "else", "anyof", "allof"})

# Constructs that break linear-time matching guarantees: backreferences,
# lookaround, conditional groups. Anything matching these makes the pattern
# a parse error.
_UNSAFE_PATTERN = re.compile(
    r"""
    \\[1-9]            # numeric backreference
    | \(\?P=           # named backreference
    | \(\?=            # lookahead
    | \(\?!            # negative lookahead
    | \(\?<=           # lookbehind
    | \(\?<!           # negative lookbehind
    | \(\?\(           # conditional group
    """,
    re.VERBOSE,
)


def compile_pattern(source: str) -> re.Pattern:
    """Compile a schema pattern, rejecting non-regular constructs."""
    if _UNSAFE_PATTERN.search(source):
        raise re.error("pattern uses constructs outside the supported regular subset")
    return re.compile(source)


@dataclass(frozen=True)
class DateSpec:
    formats: tuple[str, ...]
    delimiter: str


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    description: Optional[str] = None
    title: Optional[str] = None
    enum_values: Optional[tuple] = None
    pattern: Optional[str] = None
    min_length: Optional[int] = None
    max_length: Optional[int] = None
    condition: Optional[str] = None
    date_spec: Optional[DateSpec] = None
    children: Mapping[str, "AttributeSpec"] = field(default_factory=dict)
    item: Optional["AttributeSpec"] = None
    required_children: frozenset = frozenset()

    def child_at(self, segment: str) -> Optional["AttributeSpec"]:
        if segment == "[]":
            return self.item
        return self.children.get(segment)


@dataclass(frozen=True)
class SchemaDoc:
    root: AttributeSpec
    version_tag: str
    task_hint: Optional[str] = None

    def spec_at(self, path: str) -> Optional[AttributeSpec]:
        """Resolve a /-separated path ('[]' steps into array items)."""
        spec = self.root
        for seg in segments(path):
            spec = spec.child_at(seg)
            if spec is None:
                return None
        return spec

    def leaf_paths(self) -> list[str]:
        out: list[str] = []

        def walk(spec: AttributeSpec, path: str):
            if spec.kind == "object":
                for name, child in spec.children.items():
                    walk(child, f"{path}/{name}")
            elif spec.kind == "array" and spec.item is not None:
                walk(spec.item, f"{path}/[]")
            else:
                out.append(path or "/")

        walk(self.root, "")
        return out


def segments(path: str) -> list[str]:
    return [s for s in path.split("/") if s]


def join_path(path: str, segment: str) -> str:
    return f"{path}/{segment}"


# --- parsing -----------------------------------------------------------------


def parse_schema(text: str, task_hint: Optional[str] = None) -> SchemaDoc:
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocument("", f"not valid JSON: {exc}") from None
    root = _parse_node(doc, path="", name="")
    if root.kind != "object":
        raise InvalidAttribute("", f"root must be object-typed, got {root.kind!r}")
    canonical = canonical_serialize_root(root)
    tag = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
    return SchemaDoc(root=root, version_tag=tag, task_hint=task_hint)


def schema_from_value(value: Any, task_hint: Optional[str] = None) -> SchemaDoc:
    """Parse an already-decoded JSON value as a schema document."""
    return parse_schema(json.dumps(value), task_hint=task_hint)


def _check_keys(node: dict, path: str):
    for key in node:
        if not isinstance(key, str):
            raise MalformedDocument(path, "non-string key")
        if key.lower() in FORBIDDEN_KEYS:
            raise ForbiddenKey(path, key)
        if key not in ALLOWED_KEYS:
            raise UnknownKey(path, key)


def _parse_node(node: Any, path: str, name: str) -> AttributeSpec:
    if not isinstance(node, dict):
        raise MalformedDocument(path, "schema node must be a JSON object")
    _check_keys(node, path)

    kind = node.get("type")
    if kind not in KINDS:
        raise InvalidAttribute(path, f"missing or invalid type {kind!r}")

    description = _opt_str(node, "description", path)
    title = _opt_str(node, "title", path)
    condition = _opt_str(node, "condition", path)
    _opt_str(node, "name", path)  # accepted, but structure names come from property keys

    enum_values = None
    if "enum" in node:
        raw = node["enum"]
        if not isinstance(raw, list) or not raw:
            raise InvalidAttribute(path, "enum must be a non-empty list")
        seen = []
        for v in raw:
            if not isinstance(v, (str, int, float, bool)) and v is not None:
                raise InvalidAttribute(path, "enum values must be literals")
            if v in seen:
                raise InvalidAttribute(path, f"duplicate enum value {v!r}")
            seen.append(v)
        enum_values = tuple(raw)

    pattern = None
    if "pattern" in node:
        raw = node["pattern"]
        if not isinstance(raw, str):
            raise InvalidPattern(path, "pattern must be a string")
        try:
            compile_pattern(raw)
        except re.error as exc:
            raise InvalidPattern(path, str(exc)) from None
        pattern = raw

    min_length = _opt_count(node, "minLength", path)
    max_length = _opt_count(node, "maxLength", path)
    if min_length is not None and max_length is not None and min_length > max_length:
        raise InvalidBounds(path)

    date_spec = None
    if "allowed_date_formats" in node or "delimiter" in node:
        formats = node.get("allowed_date_formats")
        delim = node.get("delimiter")
        if not isinstance(formats, list) or not all(isinstance(f, str) for f in formats) or not formats:
            raise InvalidAttribute(path, "allowed_date_formats must be a non-empty list of strings")
        if not isinstance(delim, str) or len(delim) != 1:
            raise InvalidAttribute(path, "delimiter must be a single character")
        if kind != "string":
            raise InvalidAttribute(path, "date formats are only allowed on string attributes")
        date_spec = DateSpec(formats=tuple(formats), delimiter=delim)

    children: dict[str, AttributeSpec] = {}
    required: frozenset = frozenset()
    item = None

    if "properties" in node:
        if kind != "object":
            raise InvalidAttribute(path, "properties only allowed on object attributes")
        props = node["properties"]
        if not isinstance(props, dict):
            raise MalformedDocument(join_path(path, "properties"), "properties must be an object")
        for child_name, child_node in props.items():
            if not isinstance(child_name, str):
                raise MalformedDocument(join_path(path, "properties"), "non-string property name")
            if child_name.lower() in FORBIDDEN_KEYS:
                raise ForbiddenKey(join_path(path, "properties"), child_name)
            children[child_name] = _parse_node(
                child_node, path=join_path(path, child_name), name=child_name
            )
    elif kind == "object":
        raise InvalidAttribute(path, "object attribute must declare properties")

    if "required" in node:
        raw = node["required"]
        if not isinstance(raw, list) or not all(isinstance(v, str) for v in raw):
            raise InvalidAttribute(path, "required must be a list of names")
        for v in raw:
            if v not in children:
                raise InvalidAttribute(path, f"required name {v!r} not in properties")
        required = frozenset(raw)

    if "items" in node:
        if kind != "array":
            raise InvalidAttribute(path, "items only allowed on array attributes")
        item = _parse_node(node["items"], path=join_path(path, "[]"), name="[]")
    elif kind == "array":
        raise InvalidAttribute(path, "array attribute must declare items")

    return AttributeSpec(
        name=name,
        kind=kind,
        description=description,
        title=title,
        enum_values=enum_values,
        pattern=pattern,
        min_length=min_length,
        max_length=max_length,
        condition=condition,
        date_spec=date_spec,
        children=children,
        item=item,
        required_children=required,
    )


def _opt_str(node: dict, key: str, path: str) -> Optional[str]:
    if key not in node:
        return None
    value = node[key]
    if not isinstance(value, str):
        raise InvalidAttribute(path, f"{key} must be a string")
    return value


def _opt_count(node: dict, key: str, path: str) -> Optional[int]:
    if key not in node:
        return None
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidBounds(path, f"{key} must be an integer")
    if value < 0:
        raise InvalidBounds(path, f"{key} must be non-negative")
    return value


# --- canonical serialization ---------------------------------------------------


def _node_to_json(spec: AttributeSpec) -> dict:
    out: dict[str, Any] = {"type": spec.kind}
    if spec.description is not None:
        out["description"] = spec.description
    if spec.title is not None:
        out["title"] = spec.title
    if spec.enum_values is not None:
        out["enum"] = list(spec.enum_values)
    if spec.pattern is not None:
        out["pattern"] = spec.pattern
    if spec.min_length is not None:
        out["minLength"] = spec.min_length
    if spec.max_length is not None:
        out["maxLength"] = spec.max_length
    if spec.condition is not None:
        out["condition"] = spec.condition
    if spec.date_spec is not None:
        out["allowed_date_formats"] = list(spec.date_spec.formats)
        out["delimiter"] = spec.date_spec.delimiter
    if spec.kind == "object":
        out["properties"] = {name: _node_to_json(child) for name, child in spec.children.items()}
        if spec.required_children:
            out["required"] = sorted(spec.required_children)
    if spec.kind == "array" and spec.item is not None:
        out["items"] = _node_to_json(spec.item)
    return out


def canonical_serialize_root(root: AttributeSpec) -> str:
    return json.dumps(_node_to_json(root), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_serialize(schema: SchemaDoc) -> str:
    """Deterministic byte output: sorted keys, no insignificant whitespace."""
    return canonical_serialize_root(schema.root)


def schemas_equal(a: SchemaDoc, b: SchemaDoc) -> bool:
    return canonical_serialize(a) == canonical_serialize(b)


# --- diffing ---------------------------------------------------------------------


class ChangeCategory(str, Enum):
    DESCRIPTION_ENHANCEMENT = "DescriptionEnhancement"
    STRUCTURAL_REORGANIZATION = "StructuralReorganization"
    VALIDATION_RULE_ADDITION = "ValidationRuleAddition"
    PATTERN_RULE_ADDITION = "PatternRuleAddition"
    OTHER = "Other"


@dataclass(frozen=True)
class SchemaChange:
    path: str
    category: ChangeCategory
    before: Optional[dict] = None
    after: Optional[dict] = None


@dataclass(frozen=True)
class SchemaDiff:
    changes: tuple[SchemaChange, ...]

    def paths(self) -> frozenset:
        return frozenset(c.path for c in self.changes)

    def __len__(self) -> int:
        return len(self.changes)


_DESCRIPTION_FACETS = ("description", "title")
_VALIDATION_FACETS = ("enum_values", "min_length", "max_length", "required_children", "condition", "date_spec")


def _facet_fragment(spec: AttributeSpec) -> dict:
    """A node's own facets, children excluded, for diff reporting."""
    node = _node_to_json(spec)
    node.pop("properties", None)
    node.pop("items", None)
    return node


def _index_nodes(spec: AttributeSpec, path: str, acc: dict):
    acc[path or "/"] = spec
    for name, child in spec.children.items():
        _index_nodes(child, f"{path}/{name}", acc)
    if spec.item is not None:
        _index_nodes(spec.item, f"{path}/[]", acc)


def _classify(before: AttributeSpec, after: AttributeSpec) -> Optional[ChangeCategory]:
    """Category of an in-place node change, or None when the node is unchanged.

    Mixed changes resolve by precedence: pattern > validation > description.
    """
    pattern_changed = before.pattern != after.pattern
    validation_changed = any(
        getattr(before, facet) != getattr(after, facet) for facet in _VALIDATION_FACETS
    )
    description_changed = any(
        getattr(before, facet) != getattr(after, facet) for facet in _DESCRIPTION_FACETS
    )
    other_changed = before.kind != after.kind
    if other_changed:
        return ChangeCategory.OTHER
    if pattern_changed:
        return ChangeCategory.PATTERN_RULE_ADDITION
    if validation_changed:
        return ChangeCategory.VALIDATION_RULE_ADDITION
    if description_changed:
        return ChangeCategory.DESCRIPTION_ENHANCEMENT
    return None


def diff_schemas(before: SchemaDoc, after: SchemaDoc) -> SchemaDiff:
    before_nodes: dict[str, AttributeSpec] = {}
    after_nodes: dict[str, AttributeSpec] = {}
    _index_nodes(before.root, "", before_nodes)
    _index_nodes(after.root, "", after_nodes)

    changes: list[SchemaChange] = []
    for path in sorted(set(before_nodes) | set(after_nodes)):
        b = before_nodes.get(path)
        a = after_nodes.get(path)
        if b is None:
            changes.append(
                SchemaChange(path, ChangeCategory.STRUCTURAL_REORGANIZATION, None, _facet_fragment(a))
            )
        elif a is None:
            changes.append(
                SchemaChange(path, ChangeCategory.STRUCTURAL_REORGANIZATION, _facet_fragment(b), None)
            )
        else:
            category = _classify(b, a)
            if category is not None:
                changes.append(SchemaChange(path, category, _facet_fragment(b), _facet_fragment(a)))
    return SchemaDiff(changes=tuple(changes))


def diff_category_histogram(diffs: list[SchemaDiff]) -> dict[ChangeCategory, float]:
    counts: dict[ChangeCategory, int] = {}
    for diff in diffs:
        for change in diff.changes:
            counts[change.category] = counts.get(change.category, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return {}
    return {category: count / total for category, count in counts.items()}
