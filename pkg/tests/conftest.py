import sys

import pytest
from hypothesis import settings

from gravispheroid import synth

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def example1():
    return synth.scenario("example1")


@pytest.fixture(scope="session")
def example2():
    return synth.scenario("example2")


@pytest.fixture(scope="session")
def survey1(example1):
    return example1.survey()


@pytest.fixture(scope="session")
def survey2(example2):
    return example2.survey()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
