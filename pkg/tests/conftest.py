from __future__ import annotations

import pytest

from diagcohort import pipeline
from diagcohort.config import load_config
from diagcohort.patterns import PatternSet
from diagcohort.synthetic import generate, write_corpus

# acceptance outcome lines, repeated at the end of the run
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


EXAMPLE_INCLUSION = [
    "As someone with a diagnos*",
    "my recent CONDITION diagnos*",
    "I went to a DOCTOR and got diagnos*",
]
EXAMPLE_EXCLUSION = ["Not formally diagnos*", "self diagnos*", "she’s diagnos*"]
EXAMPLE_CONDITIONS = ["Bipolar", "manic depression", "BD-I", "BD-II", "cyclothymia"]
EXAMPLE_DOCTORS = ["Doctor", "pdoc", "shrink"]


@pytest.fixture(scope="session")
def example_set() -> PatternSet:
    """The small example pattern lists and terms."""
    return PatternSet(EXAMPLE_INCLUSION, EXAMPLE_EXCLUSION, {"BD": EXAMPLE_CONDITIONS}, EXAMPLE_DOCTORS)


@pytest.fixture(scope="session")
def synthetic_run(tmp_path_factory):
    """500-user planted corpus pushed through ingest, detect and profile."""
    directory = tmp_path_factory.mktemp("synthetic")
    corpus = generate(500, seed=7)
    cfg = load_config(write_corpus(corpus, directory))
    pipeline.cmd_ingest(cfg)
    pipeline.cmd_detect(cfg, workers=1)
    pipeline.cmd_profile(cfg, workers=1)
    return cfg, corpus
