"""One test per acceptance criterion, at the stated tolerances.

Each test prints a PASS/FAIL line; the lines are repeated in the terminal summary.
"""
import pytest

from phononlab import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.fixture(scope="module")
def ctx():
    return acceptance.Context(seed=0)


@pytest.mark.parametrize("check", acceptance.CHECKS,
                         ids=[c.__name__.removeprefix("check_") for c in acceptance.CHECKS])
def test_criterion(ctx, check):
    res = acceptance.run_one(ctx, check)
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line
