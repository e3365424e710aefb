import numpy as np
import pytest

from seesaw import SyntheticSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(num_classes=6, feature_dim=5, imbalance_ratio=20, max_count=60, seed=3)


@pytest.fixture(scope="session")
def small_ds(small_spec):
    return generate(small_spec)


VERDICTS = []


def verdict(name, ok, detail=""):
    """Record and print one acceptance line, then assert it."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    VERDICTS.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for line in VERDICTS:
            terminalreporter.write_line(line)
