import json
import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"

sys.path.insert(0, str(TESTS_DIR))

from strex.schema import schema_from_value  # noqa: E402


def wrap_values(values) -> str:
    """A well-formed model response carrying the given attribute values."""
    return (
        "<response>\n<thinking>worked through the attributes</thinking>\n"
        f"<attribute_values>{json.dumps(values, ensure_ascii=False)}</attribute_values>\n"
        "</response>"
    )


@pytest.fixture
def car_schema():
    return schema_from_value(
        {
            "type": "object",
            "properties": {
                "model": {
                    "type": "string",
                    "description": "Full model designation of the car",
                    "pattern": "^(19[5-9][0-9]|20[0-2][0-9]) [A-Za-z0-9 -+]+$",
                },
                "price": {"type": "string"},
            },
            "required": ["model"],
        }
    )


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))
