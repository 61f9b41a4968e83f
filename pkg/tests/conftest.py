import numpy as np
import pytest

from weightstego import mininet


@pytest.fixture(scope="session")
def dataset():
    return mininet.gen_dataset(0)


@pytest.fixture(scope="session")
def trained(dataset):
    """Default recipe: seed 7, 5 epochs, lr 0.05, momentum 0.9."""
    return mininet.train(dataset)


@pytest.fixture(scope="session")
def clean(trained):
    return trained.to_container()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


class Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.line = number, title, None

    def record(self, ok: bool, detail: str) -> bool:
        self.line = f"criterion {self.number:>2} {'PASS' if ok else 'FAIL'}  {self.title}: {detail}"
        return ok


@pytest.fixture
def criterion(request):
    """Records one PASS/FAIL line per acceptance criterion for the terminal summary."""
    marker = request.node.get_closest_marker("criterion")
    c = Criterion(*marker.args)
    yield c
    ACCEPTANCE_LINES.append(c.line or f"criterion {c.number:>2} FAIL  {c.title}: raised before measuring")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
