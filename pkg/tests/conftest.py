import json
from pathlib import Path

import pytest

from schemalink.data import fixture_path, load_examples, load_spider_schemas
from schemalink.schema import DbSchema

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def toy_schemas():
    return load_spider_schemas(fixture_path("toy_tables.json"))


@pytest.fixture(scope="session")
def toy_examples(toy_schemas):
    examples, rejections = load_examples(fixture_path("toy_examples.json"), toy_schemas)
    assert not rejections
    return examples


@pytest.fixture(scope="session")
def sql_corpus():
    return json.loads((DATA / "sql_corpus.json").read_text())


@pytest.fixture
def singer_schema():
    return DbSchema.from_mapping(
        "music",
        {
            "singer": ["name", "age", "id"],
            "concert": ["singer_id", "year", "concert_id"],
            "band": ["name", "genre"],
        },
    )


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def criterion(capsys):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
