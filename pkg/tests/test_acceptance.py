"""The twelve acceptance criteria at their stated tolerances.

Each criterion prints one PASS/FAIL line; run with ``-s`` or ``-v`` to see
them alongside the pytest report.
"""

import pytest

from rcbounds import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    res = acceptance.run(number)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.details
