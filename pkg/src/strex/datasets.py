"""Dataset loading: conversation transcripts and web-page samples, JSONL."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .errors import DatasetShapeError, LineParseError, ShapeViolation
from .guardrails import check_shape
from .schema import SchemaDoc

FORMATS = ("conversation-jsonl", "page-jsonl")

_SPEAKER_TAGS = {"user": "[USER]", "assistant": "[ASSISTANT]", "system": "[SYSTEM]"}


@dataclass(frozen=True)
class DatasetSpec:
    format: str
    path: str
    sample_cap: Optional[int] = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")


def flatten_turns(turns: list[dict]) -> str:
    lines = []
    for turn in turns:
        speaker = str(turn.get("speaker", "user")).lower()
        tag = _SPEAKER_TAGS.get(speaker, f"[{speaker.upper()}]")
        lines.append(f"{tag}: {turn.get('text', '')}")
    return "\n".join(lines)


def parse_dataset_lines(
    lines: list[str], fmt: str, schema: SchemaDoc, sample_cap: Optional[int] = None
) -> list[tuple[str, Any]]:
    samples: list[tuple[str, Any]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if sample_cap is not None and len(samples) >= sample_cap:
            break
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LineParseError(line_no, f"not valid JSON: {exc}") from None
        if fmt == "conversation-jsonl":
            turns = obj.get("turns")
            if not isinstance(turns, list):
                raise LineParseError(line_no, "conversation line needs a 'turns' list")
            input_text = flatten_turns(turns)
        else:
            html = obj.get("html")
            if not isinstance(html, str):
                raise LineParseError(line_no, "page line needs an 'html' string")
            input_text = html
        expected = obj.get("expected")
        if not isinstance(expected, dict):
            raise LineParseError(line_no, "line needs an 'expected' object")
        try:
            check_shape(expected, schema)
        except ShapeViolation as exc:
            raise DatasetShapeError(line_no, exc.path) from None
        samples.append((input_text, expected))
    return samples


def load_dataset(spec: DatasetSpec, schema: SchemaDoc) -> list[tuple[str, Any]]:
    lines = Path(spec.path).read_text(encoding="utf-8").splitlines()
    return parse_dataset_lines(lines, spec.format, schema, spec.sample_cap)


def load_seeds(path: str | Path) -> list:
    """Seed dataset: JSON Lines with input_text and expected per line."""
    from .refinement import SeedSample

    seeds = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            seeds.append(SeedSample(input_text=obj["input_text"], expected=obj["expected"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise LineParseError(line_no, str(exc)) from None
    return seeds
