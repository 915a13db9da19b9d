import numpy as np
import pytest

from incabs.funcs import default_domain, instantiate_builtin, parse_function_spec
from incabs.mesh import DomainBox, build_mesh


@pytest.fixture
def square():
    """f(x) = x^2 on the three-point grid {-1, 0, 1}."""
    return parse_function_spec("f0 = x0^2"), build_mesh(DomainBox((-1.0,), (1.0,), 1), 3)


@pytest.fixture(scope="session")
def rastrigin2d():
    spec = instantiate_builtin("rastrigin", {"d": 2})
    return spec, build_mesh(default_domain("rastrigin", {"d": 2}), 51)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA_KEY = pytest.StashKey[dict]()


class _Criterion:
    """Records one acceptance line: PASS when the block completes, FAIL with the error otherwise."""

    def __init__(self, store: dict, number: int, title: str):
        self.store, self.number, self.title = store, number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        state = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc_type is None else f"{self.detail} {exc_type.__name__}: {exc}".strip()
        line = f"criterion {self.number:>2} {state}: {self.title}" + (f" -- {detail}" if detail else "")
        self.store[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(_CRITERIA_KEY, {})
    return lambda number, title: _Criterion(store, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_CRITERIA_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number].splitlines()[0])
