"""Shared live-testbed fixtures.

Starting a deployment costs a couple of seconds, so the secure and
paper-poc instances are session scoped and shared across test modules.
Tests that flip toggles start their own instances instead of mutating
these.
"""

import time

import pytest

from utmaudit.engine import run_audit
from utmaudit.testbed.harness import start_testbed


@pytest.fixture(scope="session")
def secure_testbed():
    tb = start_testbed()
    yield tb
    tb.stop()


@pytest.fixture(scope="session")
def secure_audit(secure_testbed):
    """One full audit of the secure deployment plus its wall-clock time."""
    started = time.monotonic()
    report = run_audit(secure_testbed.manifest)
    return report, time.monotonic() - started


@pytest.fixture(scope="session")
def paper_poc_testbed():
    tb = start_testbed(profile="paper-poc")
    yield tb
    tb.stop()
