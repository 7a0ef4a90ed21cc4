from __future__ import annotations

import os
from pathlib import Path

import pytest

from dicelab.kernel import SpectrumCache, estimate_limit_spectrum

LIMIT_GRID = (1600, 1800, 2048)
LIMIT_L = 400

# criterion lines collected by the acceptance suite, echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def spectrum_cache(tmp_path_factory) -> SpectrumCache:
    """Spectra for the default limit grid; reuses $DICE_LAB_CACHE when set."""
    root = os.environ.get("DICE_LAB_CACHE")
    path = Path(root) if root else tmp_path_factory.mktemp("spectra")
    return SpectrumCache(path)


@pytest.fixture(scope="session")
def limit_spectrum(spectrum_cache):
    return estimate_limit_spectrum(LIMIT_GRID, LIMIT_L, spectrum_cache)
