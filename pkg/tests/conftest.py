import json
import pathlib

import pytest


@pytest.fixture(scope="session")
def reference():
    """High-precision reference values (see fixtures/generate_reference.py)."""
    path = pathlib.Path(__file__).parent / "fixtures" / "reference.json"
    return json.loads(path.read_text())
