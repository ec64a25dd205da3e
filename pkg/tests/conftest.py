import sys

import pytest

from chargedpolymer.lattice_walk import ChargeModel, make_walk


@pytest.fixture(scope="session")
def simple1():
    return make_walk("simple", 1)


@pytest.fixture(scope="session")
def simple3():
    return make_walk("simple", 3)


@pytest.fixture(scope="session")
def rademacher():
    return ChargeModel("rademacher")


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
