import pytest

from redes.ledger import GENESIS

GENESIS_DIGEST = "d24dbd41f5d5bc4ac7ad0325b9926efa4e12969ff95d7db2e79492a9970bc4f0"
# Smallest proofs after the genesis proof (100), found by a shell sha256sum loop.
P_STAR = {1: 16, 2: 226, 4: 35293}


@pytest.fixture
def genesis_chain():
    return [GENESIS]


ACCEPTANCE_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, ok, detail)`` then assert."""

    def record(name, ok, detail=""):
        ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")
