"""Shared fixtures for the test suite.

Fixture data lives in tests/fixtures/:
  - ws-minimal/            a small hand-counted workspace
  - ws-minimal-manifest.json  its expected summary, counted independently
  - scenarios/*.json       mock executor scripts used by controller runs
  - trace-golden.json      frozen 40-step run of scenarios/golden.json

reference_sim.py sits next to the tests; putting tests/ on sys.path here
keeps `import reference_sim` working from any invocation directory.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Any, Optional

import pytest

TESTS_DIR = Path(__file__).resolve().parent
FIXTURES_DIR = TESTS_DIR / "fixtures"
SCENARIOS_DIR = FIXTURES_DIR / "scenarios"

if str(TESTS_DIR) not in sys.path:
    sys.path.insert(0, str(TESTS_DIR))


def load_scenario(name: str) -> dict[str, Any]:
    path = SCENARIOS_DIR / f"{name}.json"
    return json.loads(path.read_text(encoding="utf-8"))


def scenario_file(name: str) -> Path:
    return SCENARIOS_DIR / f"{name}.json"


def scenario_config(
    workdir: Path,
    name: str,
    *,
    budget: Optional[int] = None,
    biases: Optional[dict[str, float]] = None,
    extra: Optional[dict[str, Any]] = None,
):
    """RunConfig for running a scenario fixture in ``workdir``.

    budget and biases default to the overrides recorded in the scenario
    file so tests reproduce exactly the runs the fixtures were frozen
    under.
    """
    from cesm import config_from_dict

    overrides = load_scenario(name).get("overrides", {})
    raw: dict[str, Any] = {
        "workspace_root": str(workdir),
        "budget": budget if budget is not None else overrides.get("budget", 40),
        "biases": biases if biases is not None else overrides.get("biases", {}),
        "executor": {"mode": "mock", "script": str(scenario_file(name))},
    }
    if extra:
        raw.update(extra)
    return config_from_dict(raw)


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def ws_minimal() -> Path:
    return FIXTURES_DIR / "ws-minimal"


@pytest.fixture(scope="session")
def ws_manifest() -> dict[str, Any]:
    path = FIXTURES_DIR / "ws-minimal-manifest.json"
    return json.loads(path.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def golden() -> dict[str, Any]:
    path = FIXTURES_DIR / "trace-golden.json"
    return json.loads(path.read_text(encoding="utf-8"))
