import random
from pathlib import Path

import pytest

from stegsuggest.codebook import build_codebook, read_wordlist
from stegsuggest.wire import parse_suggestions

DATA = Path(__file__).parent / "data"
GOLDEN_KEY = 0x0123456789ABCDEF


@pytest.fixture(scope="session")
def wordlist():
    return read_wordlist(DATA / "wordlist_5000.tsv")


@pytest.fixture(scope="session")
def codebook(wordlist):
    return build_codebook(wordlist, GOLDEN_KEY)


@pytest.fixture
def fig3():
    return parse_suggestions((DATA / "fig3_body.txt").read_bytes())


@pytest.fixture
def rng():
    return random.Random(20110419)


def random_bits(rng, n):
    return "".join(rng.choice("01") for _ in range(n))


# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {line}")
