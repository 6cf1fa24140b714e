"""Runs every acceptance criterion at its stated tolerance and prints one line per criterion."""
import pytest

from omnilens.harness.acceptance import CHECKS


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CHECKS))
def test_criterion(name, capsys):
    result = CHECKS[name]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.ok, result.line()
