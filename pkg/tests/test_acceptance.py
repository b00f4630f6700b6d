"""Exit criteria, one test each.

Every test prints its ``[PASS]``/``[FAIL]`` line straight to the terminal
(bypassing capture) so the table is visible in a plain ``pytest -v`` log.
"""

import pytest

from agora.acceptance import CRITERIA, format_line, run_criterion

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]}-{c[1].replace(' ', '_')}" for c in CRITERIA])
def test_criterion(number, capsys):
    result = run_criterion(number)
    with capsys.disabled():
        print("\n" + format_line(result))
    assert result.passed, result.detail
