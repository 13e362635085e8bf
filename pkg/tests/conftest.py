import pytest

from fbsde_picard import make_grid, sample_brownian

# pass/fail lines emitted by test_acceptance, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def small_bundle():
    grid = make_grid(1.0, 10)
    return grid, sample_brownian(4000, grid, 1, 7)
