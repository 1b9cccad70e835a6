import json

import pytest

from lagamc.catalog import DatasetSplit, Document, LabelCatalog
from lagamc.promptkit import PromptTemplate

ANGER = ("Anger, which can also encompass annoyance and rage, is a powerful emotion "
         "that arises when one feels slighted or wronged.")
DISGUST = ("Disgust, which can involve disinterest, dislike, and even loathing, is the strong "
           "aversion or revulsion towards something unpleasant or offensive.")

SEMEVAL_LABELS = ["Anger", "Anticipation", "Disgust", "Fear", "Joy", "Love", "Optimism",
                  "Pessimism", "Sadness", "Surprise", "Trust", "Neutral"]


@pytest.fixture
def semeval_catalog():
    entries = []
    for name in SEMEVAL_LABELS:
        refined = {"Anger": ANGER, "Disgust": DISGUST}.get(
            name, f"{name}, an emotion label describing tweets that express {name.lower()}.")
        entries.append({"name": name, "initial_text": f"{name}, an emotion.",
                        "refined_text": refined, "source": "refined"})
    return LabelCatalog.from_entries(entries)


@pytest.fixture
def semeval_template():
    return PromptTemplate(
        "First read the task description. There could be multiple categories description for a tweet."
    )


@pytest.fixture
def abc_catalog():
    return LabelCatalog.from_entries(
        {"name": n, "initial_text": f"{n} seed.", "refined_text": f"{n} refined.", "source": "refined"}
        for n in "ABC"
    )


def make_split(name, rows):
    return DatasetSplit(name, tuple(Document(i, t, tuple(labs)) for i, t, labs in rows))


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(name, records):
        path = tmp_path / name
        with path.open("w") as fh:
            for rec in records:
                fh.write((rec if isinstance(rec, str) else json.dumps(rec)) + "\n")
        return path
    return _write


# acceptance results, filled by test_acceptance.py and echoed in the terminal summary
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
ACCEPTANCE_TOTAL = 10


def pytest_terminal_summary(terminalreporter):
    stats = terminalreporter.stats
    reports = stats.get("passed", []) + stats.get("failed", []) + stats.get("error", [])
    ran = any("test_acceptance" in getattr(r, "nodeid", "") for r in reports)
    if not ACCEPTANCE and not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_TOTAL + 1):
        if n in ACCEPTANCE:
            title, ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} FAIL  not run")
