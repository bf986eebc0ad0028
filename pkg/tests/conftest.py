import pytest
from hypothesis import settings

from cavityqed.core_params import derive_quantities, preset

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def system():
    atom, cavity = preset("paper-2003")
    return atom, cavity, derive_quantities(atom, cavity)


ACCEPTANCE_LINES = []  # (criterion number, line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
