"""Versioned thresholds and fitted constants used by the experiments.

Values live in ``data/calibration.json``.  They come from pilot runs (see
:func:`torsionlab.experiments.fit_error_constants`) and are never inlined in
experiment code, so a report can always name the calibration it was judged by.
"""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def _load_default() -> str:
    return resources.files("torsionlab").joinpath("data/calibration.json").read_text(encoding="utf-8")


def load(path=None) -> dict:
    """Calibration mapping; a fresh copy on every call."""
    if path is None:
        return json.loads(_load_default())
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def version(cal: dict | None = None) -> str:
    return (cal or load())["version"]


def error_constants(cal: dict | None = None) -> tuple[float, float]:
    """``(c1, C1)`` fitted envelope constants of the approximation bound."""
    ec = (cal or load())["error_constants"]
    return float(ec["c1"]), float(ec["C1"])
