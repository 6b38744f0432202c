"""Shared fixtures: scenes and sampled datasets are expensive, so they are cached per session."""

from __future__ import annotations

import functools

import pytest

from holoflow.scenes import builtin
from holoflow.tracing import sample_causality_map

LAMBDA = "1 + 0.5 * sin(x) * cos(y)"

# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def scene(name, lam=None):
    sc = builtin(name)
    return sc if lam is None else sc.with_lambda(lam)


@functools.lru_cache(maxsize=None)
def dataset(name, density=100.0, lam=None):
    sc = scene(name, lam)
    return sample_causality_map(sc.domain, sc.flow, density)


@pytest.fixture(scope="session")
def get_scene():
    return scene


@pytest.fixture(scope="session")
def get_dataset():
    return dataset


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
