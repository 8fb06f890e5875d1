import pytest

from strex.errors import NothingToReflect, ShapeViolation
from strex.guardrails import (
    ExtractionCandidate,
    FindingCode,
    Stage,
    build_reflection,
    check_grounding,
    check_missing_attributes,
    check_rules,
    check_shape,
    digits_grounded,
    normalize_needle,
    text_grounded,
    validate,
)
from strex.schema import schema_from_value


def doc(value):
    return schema_from_value(value)


def cand(schema, values, text=""):
    return ExtractionCandidate(values=values, source_text=text, schema=schema)


PERSON = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "age": {"type": "integer"},
        "tags": {"type": "array", "items": {"type": "string"}},
    },
    "required": ["name", "age"],
}


class TestNormalization:
    def test_casefold_and_whitespace(self):
        assert text_grounded("San  FRANCISCO", "flying to san francisco tomorrow")

    def test_edge_punctuation_trimmed_from_needle(self):
        assert text_grounded("'Livermore'.", "lives in Livermore these days")

    def test_interior_punctuation_kept(self):
        assert not text_grounded("a.b", "ab only here")

    def test_empty_needle_grounded(self):
        assert text_grounded("  !! ", "anything")
        assert normalize_needle(" ?! ") == ""

    def test_digit_grounding(self):
        assert digits_grounded(19995, "Price: $19,995 today")
        assert not digits_grounded(19996, "Price: $19,995 today")


class TestShape:
    def test_unknown_key_violates(self):
        with pytest.raises(ShapeViolation):
            check_shape({"nickname": "x"}, doc(PERSON))

    def test_object_under_scalar_violates(self):
        with pytest.raises(ShapeViolation):
            check_shape({"name": {"first": "x"}}, doc(PERSON))

    def test_list_under_scalar_violates(self):
        with pytest.raises(ShapeViolation):
            check_shape({"name": ["x"]}, doc(PERSON))

    def test_wrong_scalar_type_is_not_a_shape_problem(self):
        check_shape({"name": 42}, doc(PERSON))  # rule compliance's business

    def test_null_anywhere_ok(self):
        check_shape({"name": None, "tags": None}, doc(PERSON))


class TestMissingAttribute:
    def test_absent_required_flagged(self):
        schema = doc(PERSON)
        findings = check_missing_attributes(cand(schema, {"name": "Ada"}), schema)
        assert [(f.path, f.code) for f in findings] == [("/age", FindingCode.MISSING_REQUIRED)]

    def test_null_counts_as_present(self):
        schema = doc(PERSON)
        assert check_missing_attributes(cand(schema, {"name": None, "age": None}), schema) == []

    def test_optional_absent_ok(self):
        schema = doc(PERSON)
        assert check_missing_attributes(cand(schema, {"name": "Ada", "age": 1}), schema) == []

    def test_nested_required_inside_arrays(self):
        schema = doc(
            {
                "type": "object",
                "properties": {
                    "rows": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {"id": {"type": "string"}},
                            "required": ["id"],
                        },
                    }
                },
            }
        )
        findings = check_missing_attributes(cand(schema, {"rows": [{"id": "a"}, {}]}), schema)
        assert [f.path for f in findings] == ["/rows/1/id"]


class TestGrounding:
    def test_grounded_value_passes(self):
        schema = doc(PERSON)
        c = cand(schema, {"name": "Ada Lovelace"}, "met Ada Lovelace at noon")
        assert check_grounding(c, schema) == []

    def test_ungrounded_string_flagged(self):
        schema = doc(PERSON)
        c = cand(schema, {"name": "Grace"}, "met Ada at noon")
        findings = check_grounding(c, schema)
        assert [(f.path, f.code) for f in findings] == [("/name", FindingCode.NOT_GROUNDED)]

    def test_boolean_exempt(self):
        schema = doc({"type": "object", "properties": {"ok": {"type": "boolean"}}})
        assert check_grounding(cand(schema, {"ok": True}, "no mention"), schema) == []

    def test_number_by_digit_sequence(self):
        schema = doc(PERSON)
        assert check_grounding(cand(schema, {"age": 42}, "he is 42 years old"), schema) == []
        flagged = check_grounding(cand(schema, {"age": 43}, "he is 42 years old"), schema)
        assert [f.path for f in flagged] == ["/age"]

    def test_date_reinterpretation(self):
        schema = doc(
            {
                "type": "object",
                "properties": {
                    "when": {"type": "string", "allowed_date_formats": ["MM/DD/YYYY"], "delimiter": "/"}
                },
            }
        )
        ok = cand(schema, {"when": "03/14/2026"}, "meet on March 14th, 2026 at noon")
        assert check_grounding(ok, schema) == []
        bad = cand(schema, {"when": "03/15/2026"}, "meet on March 14th, 2026 at noon")
        assert [f.code for f in check_grounding(bad, schema)] == [FindingCode.NOT_GROUNDED]

    def test_null_skipped(self):
        schema = doc(PERSON)
        assert check_grounding(cand(schema, {"name": None}, ""), schema) == []


class TestRuleCompliance:
    def test_type_mismatch(self):
        schema = doc(PERSON)
        findings = check_rules(cand(schema, {"age": "forty"}), schema)
        assert [(f.path, f.code) for f in findings] == [("/age", FindingCode.TYPE_MISMATCH)]

    def test_bool_is_not_an_integer(self):
        schema = doc(PERSON)
        assert [f.code for f in check_rules(cand(schema, {"age": True}), schema)] == [
            FindingCode.TYPE_MISMATCH
        ]

    def test_enum(self):
        schema = doc({"type": "object", "properties": {"c": {"type": "string", "enum": ["red", "blue"]}}})
        assert check_rules(cand(schema, {"c": "red"}), schema) == []
        assert [f.code for f in check_rules(cand(schema, {"c": "green"}), schema)] == [
            FindingCode.ENUM_VIOLATION
        ]

    def test_pattern_full_match_only(self):
        schema = doc({"type": "object", "properties": {"y": {"type": "string", "pattern": r"\d{4}"}}})
        assert check_rules(cand(schema, {"y": "2026"}), schema) == []
        assert [f.code for f in check_rules(cand(schema, {"y": "year 2026"}), schema)] == [
            FindingCode.PATTERN_MISMATCH
        ]

    def test_length_on_string_form_of_nonstrings(self):
        schema = doc({"type": "object", "properties": {"n": {"type": "string", "maxLength": 3}}})
        findings = check_rules(cand(schema, {"n": 12345}), schema)
        codes = sorted(f.code for f in findings)
        assert codes == sorted([FindingCode.TYPE_MISMATCH, FindingCode.LENGTH_VIOLATION])

    def test_date_format_violation(self):
        schema = doc(
            {
                "type": "object",
                "properties": {
                    "d": {"type": "string", "allowed_date_formats": ["MM/DD/YYYY"], "delimiter": "/"}
                },
            }
        )
        assert [f.code for f in check_rules(cand(schema, {"d": "3/14/2026"}), schema)] == [
            FindingCode.DATE_FORMAT_VIOLATION
        ]

    def test_multiple_violations_all_reported(self):
        schema = doc(
            {
                "type": "object",
                "properties": {
                    "x": {"type": "string", "pattern": "^[a-z]+$", "minLength": 10, "enum": ["zzz"]}
                },
            }
        )
        findings = check_rules(cand(schema, {"x": "Abc"}), schema)
        assert {f.code for f in findings} == {
            FindingCode.ENUM_VIOLATION,
            FindingCode.PATTERN_MISMATCH,
            FindingCode.LENGTH_VIOLATION,
        }


class TestValidateAssembly:
    def test_three_stages_in_order(self):
        schema = doc(PERSON)
        report = validate(cand(schema, {"name": "Ada", "age": 1}, "Ada is 1"), schema)
        assert [s.stage for s in report.stages] == [
            Stage.MISSING_ATTRIBUTE,
            Stage.GROUNDING,
            Stage.RULE_COMPLIANCE,
        ]
        assert report.overall

    def test_all_stages_run_even_when_first_fails(self):
        schema = doc(PERSON)
        report = validate(cand(schema, {"name": "Grace", "tags": "x"}, "Ada only"), schema)
        assert not report.overall
        assert not report.stages[0].passed  # /age missing
        assert not report.stages[1].passed  # Grace ungrounded
        assert not report.stages[2].passed  # /tags is not an array

    def test_findings_flattened(self):
        schema = doc(PERSON)
        report = validate(cand(schema, {"name": "Grace"}, ""), schema)
        assert {f.code for f in report.findings()} == {
            FindingCode.MISSING_REQUIRED,
            FindingCode.NOT_GROUNDED,
        }


class TestReflection:
    def test_passing_report_has_nothing_to_reflect(self):
        schema = doc(PERSON)
        report = validate(cand(schema, {"name": "Ada", "age": 1}, "Ada is 1"), schema)
        with pytest.raises(NothingToReflect):
            build_reflection(report, schema)

    def test_reflection_enumerates_findings(self):
        schema = doc(
            {
                "type": "object",
                "properties": {
                    "model": {"type": "string", "pattern": "^[0-9]{4} .+$", "description": "car model"}
                },
                "required": ["model"],
            }
        )
        report = validate(cand(schema, {"model": "Subaru Legacy"}, "2010 Subaru Legacy"), schema)
        note = build_reflection(report, schema)
        assert note.finding_count == 1
        assert "PatternMismatch at /model" in note.text
        assert "^[0-9]{4} .+$" in note.text  # the schema demand is quoted
        assert "Subaru Legacy" in note.text  # the offending value is quoted

    def test_reflection_numbers_every_finding(self):
        schema = doc(PERSON)
        report = validate(cand(schema, {"name": "Grace", "age": "x"}, ""), schema)
        note = build_reflection(report, schema)
        assert note.finding_count >= 3
        for i in range(1, note.finding_count + 1):
            assert f"\n{i}. " in note.text
