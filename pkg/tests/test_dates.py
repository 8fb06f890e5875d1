import pytest

from strex.dates import (
    DateParts,
    dates_in_text,
    grounded_as_date,
    matches_any_format,
    matches_format,
    render,
)


class TestFormatMatching:
    @pytest.mark.parametrize(
        "value,fmt,delim,ok",
        [
            ("03/14/2026", "MM/DD/YYYY", "/", True),
            ("3/14/2026", "MM/DD/YYYY", "/", False),  # MM demands two digits
            ("3/14/2026", "M/D/YYYY", "/", True),
            ("03/14/26", "MM/DD/YYYY", "/", False),
            ("03/14/26", "MM/DD/YY", "/", True),
            ("13/01/2026", "MM/DD/YYYY", "/", False),  # month out of range
            ("12/32/2026", "MM/DD/YYYY", "/", False),  # day out of range
            ("14-03-2026", "DD-MM-YYYY", "-", True),
            ("14-03-2026", "MM-DD-YYYY", "-", False),
            ("2026/03/14", "YYYY/MM/DD", "/", True),
            ("03/14", "MM/DD", "/", True),
            ("march/14", "MM/DD", "/", False),  # non-numeric component
        ],
    )
    def test_matches_format(self, value, fmt, delim, ok):
        assert matches_format(value, fmt, delim) is ok

    def test_unknown_token_never_matches(self):
        assert not matches_format("03/14/2026", "XX/DD/YYYY", "/")

    def test_matches_any(self):
        assert matches_any_format("3/14/2026", ["MM/DD/YYYY", "M/D/YYYY"], "/")
        assert not matches_any_format("2026", ["MM/DD/YYYY"], "/")


class TestRendering:
    def test_render_full(self):
        parts = DateParts(year=2026, month=3, day=14)
        assert render(parts, "MM/DD/YYYY", "/") == "03/14/2026"
        assert render(parts, "M/D/YY", "/") == "3/14/26"
        assert render(parts, "DD-MM-YYYY", "-") == "14-03-2026"

    def test_render_missing_component(self):
        assert render(DateParts(month=3, day=14), "MM/DD/YYYY", "/") is None


class TestTextScanning:
    def test_numeric_span(self):
        found = dates_in_text("due on 3/14/2026, thanks")
        assert DateParts(year=2026, month=3, day=14) in found

    def test_ambiguous_numeric_span_gets_both_readings(self):
        found = dates_in_text("on 3/4/2026")
        assert DateParts(year=2026, month=3, day=4) in found
        assert DateParts(year=2026, month=4, day=3) in found

    def test_month_name_span(self):
        assert DateParts(year=2026, month=3, day=14) in dates_in_text("March 14th, 2026")
        assert DateParts(year=None, month=3, day=14) in dates_in_text("march 14")

    def test_day_of_month_span(self):
        assert DateParts(year=2026, month=3, day=14) in dates_in_text("the 14th of March 2026")

    def test_year_first_span(self):
        assert DateParts(year=2026, month=3, day=14) in dates_in_text("2026-03-14")


class TestDateGrounding:
    def test_reformatted_mention_is_grounded(self):
        assert grounded_as_date("03/14/2026", "see you March 14th, 2026", ["MM/DD/YYYY"], "/")

    def test_numeric_mention_other_delimiter(self):
        assert grounded_as_date("03/14/2026", "deadline 14-3-2026", ["MM/DD/YYYY"], "/")

    def test_wrong_date_not_grounded(self):
        assert not grounded_as_date("03/15/2026", "see you March 14th, 2026", ["MM/DD/YYYY"], "/")

    def test_format_must_be_allowed(self):
        assert not grounded_as_date("14/03/2026", "March 14th, 2026", ["MM/DD/YYYY"], "/")
