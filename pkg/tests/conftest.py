import numpy as np
import pytest

from tweedie_exposure.portfolio import ExposureLaw, SyntheticSpec, simulate, split

# Shared synthetic settings for the simulation checks. 65% cancelled
# contracts makes the exposure misspecification bite hard enough to see.
STUDY_N = 100_000
STUDY_SEED = 1
STUDY_XO = 0.65


@pytest.fixture(scope="session")
def study_portfolio():
    return simulate(SyntheticSpec(STUDY_N, delta=ExposureLaw("power", 0.6), xo_fraction=STUDY_XO, seed=STUDY_SEED))


@pytest.fixture(scope="session")
def study_split(study_portfolio):
    return split(study_portfolio, 0.75, seed=STUDY_SEED)


@pytest.fixture(scope="session")
def small_portfolio():
    return simulate(SyntheticSpec(4000, xo_fraction=0.5, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# One line per acceptance criterion, echoed in the terminal summary so it
# shows up even when pytest captures stdout.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
