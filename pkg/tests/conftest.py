import json
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"


def golden_tables():
    with open(DATA / "golden_tables.jsonl", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


@pytest.fixture(scope="session")
def synth_texts():
    from sqlfim.synth import synthetic_corpus

    return synthetic_corpus(1000, seed=0)


@pytest.fixture(scope="session")
def balanced_corpus(synth_texts):
    from sqlfim.corpus import curate
    from sqlfim.jsonl import dumps

    queries, _ = curate([dumps({"text": t}) for t in synth_texts], cell_target=42, seed=1)
    return queries


# One summary line per acceptance criterion, whatever the verbosity.
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.failed:
        num = int(name.split("_")[2])
        label = name.split("_", 3)[3].replace("_", " ")
        if _CRITERIA.get(num, ("", ""))[1] != "FAIL":
            _CRITERIA[num] = (label, "FAIL" if report.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        label, status = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {status}: {label}")
