import pytest

from ctxvrp.instance import augment, read_solomon
from helpers import ACCEPTANCE, C101


@pytest.fixture(scope="session")
def c101():
    return read_solomon(C101)


@pytest.fixture(scope="session")
def c101_aug(c101):
    return augment(c101, 7)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
