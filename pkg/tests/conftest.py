import random

import pytest

from vmuckle import hakelab, suite, testbed


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(scope="session")
def test_hierarchy():
    """TestDSS leaves under an Ed25519 + TestDSS CA; cheap to build once."""
    return testbed.make_hierarchy("TestDSS", ca_pq_alg="TestDSS", rng=random.Random(99))


@pytest.fixture(scope="session")
def lab_keys():
    return hakelab.LongTermKeys.generate(3, suite.TEST_SUITE, random.Random(5))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
