from pathlib import Path

import pytest

from czanaphora.corpus import load_dataset

DATA = Path(__file__).parent / "data"
GOLDENS = Path(__file__).parent / "goldens"


@pytest.fixture(scope="session")
def fixture_path() -> Path:
    return DATA / "fixture.jsonl"


@pytest.fixture(scope="session")
def conllu_path() -> Path:
    return DATA / "fixture_test.conllu"


@pytest.fixture(scope="session")
def dataset(fixture_path):
    return load_dataset(fixture_path, strict=True)


@pytest.fixture(scope="session")
def budova(dataset):
    return dataset["budova"]


# (criterion, status, detail) lines collected by test_acceptance.py
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(ACCEPTANCE, key=lambda r: (int(r[0].split()[0]), r[0])):
        terminalreporter.write_line(f"criterion {name}: {status} - {detail}")
