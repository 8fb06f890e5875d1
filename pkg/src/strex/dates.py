"""Deterministic date-format checking and date grounding.

Formats are delimiter-separated component tokens (e.g. "MM/DD/YYYY" with
delimiter "/"). Grounding reinterprets dates mentioned in the source text
(numeric spans and month-name spans) and checks whether the candidate value
is one of their renderings under the allowed formats.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional

_MONTHS = {
    "january": 1, "february": 2, "march": 3, "april": 4, "may": 5, "june": 6,
    "july": 7, "august": 8, "september": 9, "october": 10, "november": 11, "december": 12,
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "jun": 6, "jul": 7, "aug": 8,
    "sep": 9, "sept": 9, "oct": 10, "nov": 11, "dec": 12,
}

_COMPONENT_WIDTHS = {"YYYY": 4, "YY": 2, "MM": 2, "M": None, "DD": 2, "D": None}


@dataclass(frozen=True)
class DateParts:
    year: Optional[int] = None
    month: Optional[int] = None
    day: Optional[int] = None


def _component_ok(token: str, text: str) -> bool:
    if not text.isdigit():
        return False
    width = _COMPONENT_WIDTHS.get(token)
    if width is not None and len(text) != width:
        return False
    if width is None and not 1 <= len(text) <= 2:
        return False
    value = int(text)
    if token in ("MM", "M"):
        return 1 <= value <= 12
    if token in ("DD", "D"):
        return 1 <= value <= 31
    return True


def matches_format(value: str, fmt: str, delimiter: str) -> bool:
    tokens = fmt.split(delimiter)
    fields = value.split(delimiter)
    if len(tokens) != len(fields):
        return False
    if any(t not in _COMPONENT_WIDTHS for t in tokens):
        return False
    return all(_component_ok(t, f.strip()) for t, f in zip(tokens, fields))


def matches_any_format(value: str, formats: Iterable[str], delimiter: str) -> bool:
    return any(matches_format(value, fmt, delimiter) for fmt in formats)


def render(parts: DateParts, fmt: str, delimiter: str) -> Optional[str]:
    pieces = []
    for token in fmt.split(delimiter):
        if token == "YYYY":
            if parts.year is None:
                return None
            pieces.append(f"{parts.year:04d}")
        elif token == "YY":
            if parts.year is None:
                return None
            pieces.append(f"{parts.year % 100:02d}")
        elif token == "MM":
            if parts.month is None:
                return None
            pieces.append(f"{parts.month:02d}")
        elif token == "M":
            if parts.month is None:
                return None
            pieces.append(str(parts.month))
        elif token == "DD":
            if parts.day is None:
                return None
            pieces.append(f"{parts.day:02d}")
        elif token == "D":
            if parts.day is None:
                return None
            pieces.append(str(parts.day))
        else:
            return None
    return delimiter.join(pieces)


_NUMERIC_SPAN = re.compile(r"\b(\d{1,4})([/\-.])(\d{1,2})(?:\2(\d{1,4}))?\b")
_MONTH_NAME_SPAN = re.compile(
    r"\b([A-Za-z]{3,9})\s+(\d{1,2})(?:st|nd|rd|th)?(?:\s*,?\s*(\d{4}))?\b"
)
_DAY_OF_MONTH_SPAN = re.compile(
    r"\b(\d{1,2})(?:st|nd|rd|th)?\s+of\s+([A-Za-z]{3,9})(?:\s*,?\s*(\d{4}))?\b"
)


def _numeric_interpretations(a: int, b: int, c: Optional[int]) -> list[DateParts]:
    out = []
    if c is None:
        # two fields: month/day or day/month
        if 1 <= a <= 12 and 1 <= b <= 31:
            out.append(DateParts(month=a, day=b))
        if 1 <= b <= 12 and 1 <= a <= 31:
            out.append(DateParts(month=b, day=a))
        return out
    # three fields: M/D/Y, D/M/Y, Y/M/D
    if 1 <= a <= 12 and 1 <= b <= 31:
        out.append(DateParts(year=_expand_year(c), month=a, day=b))
    if 1 <= b <= 12 and 1 <= a <= 31:
        out.append(DateParts(year=_expand_year(c), month=b, day=a))
    if a >= 1000 and 1 <= b <= 12 and c is not None and 1 <= c <= 31:
        out.append(DateParts(year=a, month=b, day=c))
    return out


def _expand_year(y: int) -> int:
    return y if y >= 100 else 2000 + y


def dates_in_text(text: str) -> list[DateParts]:
    found: list[DateParts] = []
    for m in _NUMERIC_SPAN.finditer(text):
        a = int(m.group(1))
        b = int(m.group(3))
        c = int(m.group(4)) if m.group(4) else None
        found.extend(_numeric_interpretations(a, b, c))
    for m in _MONTH_NAME_SPAN.finditer(text):
        month = _MONTHS.get(m.group(1).lower())
        if month is None:
            continue
        year = int(m.group(3)) if m.group(3) else None
        found.append(DateParts(year=year, month=month, day=int(m.group(2))))
    for m in _DAY_OF_MONTH_SPAN.finditer(text):
        month = _MONTHS.get(m.group(2).lower())
        if month is None:
            continue
        year = int(m.group(3)) if m.group(3) else None
        found.append(DateParts(year=year, month=month, day=int(m.group(1))))
    return found


def grounded_as_date(value: str, text: str, formats: Iterable[str], delimiter: str) -> bool:
    """True when value equals some allowed-format rendering of a date in text."""
    for parts in dates_in_text(text):
        for fmt in formats:
            if render(parts, fmt, delimiter) == value:
                return True
    return False
