"""Shared fixtures and the acceptance-criteria summary report."""

from __future__ import annotations

import zlib

import numpy as np
import pytest

# Acceptance test name -> criterion label printed in the summary.
CRITERIA = {
    "test_synthetic_end_to_end": "synthetic end-to-end (calibrate/track/associate/lift)",
    "test_geometry_oracles": "geometry oracles (round-trip, pose identity, association)",
    "test_edit_algebra": "edit algebra (conservation, undo, replay, identities)",
    "test_statistics_oracles": "statistics oracles (noise, speed, distance, ADE/FDE, split)",
    "test_service_differential": "service differential (fuzzed edits, export, crash replay)",
    "test_dataset_statistics": "released dataset statistics (optional)",
}

_outcomes: dict[str, str] = {}


@pytest.fixture
def rng(request) -> np.random.Generator:
    """Per-test deterministic generator seeded from the test id."""
    return np.random.default_rng(zlib.crc32(request.node.nodeid.encode()))


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    base = report.nodeid.rsplit("::", 1)[-1].split("[")[0]
    if base not in CRITERIA:
        return
    if report.when == "setup" and report.skipped:
        _outcomes[base] = "SKIP"
    elif report.when == "call":
        _outcomes[base] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for base, label in CRITERIA.items():
        if base in _outcomes:
            terminalreporter.write_line(f"{_outcomes[base]:4s}  {label}")
