import pytest

from geodec.geodata import load_default_dataset
from geodec.metrics import ValidatorProfile


@pytest.fixture(scope="session")
def dataset():
    return load_default_dataset()


@pytest.fixture(scope="session")
def registry(dataset):
    return dataset[0]


@pytest.fixture(scope="session")
def matrix(dataset):
    return dataset[1]


@pytest.fixture(scope="session")
def make_set(registry):
    """Build a validator set from (city, count) pairs, ids in order."""
    def build(*spec):
        out = []
        for city, count in spec:
            for _ in range(count):
                out.append(ValidatorProfile(len(out), city, registry[city].coords))
        return out
    return build


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
