import json
from importlib import resources

import jsonschema
import pytest


def load_schema(name: str) -> dict:
    return json.loads(resources.files("svol").joinpath("schemas", f"{name}.schema.json").read_text())


@pytest.fixture
def validate():
    def check(obj, name):
        jsonschema.validate(obj, load_schema(name))
    return check


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
