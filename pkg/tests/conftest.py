import sys

import numpy as np
import pytest

from osdg.datasets import RawDigitSet
from osdg.glyphs import synth_digits


@pytest.fixture(scope="session")
def raw_digits() -> RawDigitSet:
    return synth_digits(1500, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
