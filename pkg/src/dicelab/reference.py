"""Pinned pilot-run thresholds shipped with the package."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def load_reference() -> dict:
    text = resources.files("dicelab").joinpath("data/reference.json").read_text()
    return json.loads(text)


def tie_tolerance(n: int) -> float:
    return float(load_reference()["tie_tolerance"][str(n)])
