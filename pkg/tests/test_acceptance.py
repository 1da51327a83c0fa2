"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured values so
that ``pytest -v -s`` (or the captured output in a report) doubles as the
acceptance table.  ``bbz verify`` runs the same checks from the command line.
"""

import pytest

from bbz import acceptance


@pytest.mark.slow
@pytest.mark.parametrize("number,name", [(n, name) for n, name, _ in acceptance.CHECKS],
                         ids=[f"{n:02d}-{name.replace(' ', '_')}" for n, name, _ in acceptance.CHECKS])
def test_criterion(number, name, acceptance_ctx, acceptance_log):
    result = acceptance.run_check(number, acceptance_ctx)
    print(result.line())
    acceptance_log.append(result.line())
    assert result.passed, result.line()
