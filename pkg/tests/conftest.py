import pytest

from mrp.distributions import Exponential, ParetoRV, ScaledFamily
from mrp.param_chain import FiniteChain, ResamplingKernel, TargetSet


@pytest.fixture
def two_state():
    return FiniteChain([1.0, 2.0], [[0.9, 0.1], [0.2, 0.8]])


@pytest.fixture
def single_state():
    return FiniteChain([1.0], [[1.0]])


@pytest.fixture
def uniform_kernel():
    return ResamplingKernel.uniform(1.0, 2.0)


@pytest.fixture
def exp_family():
    return ScaledFamily(Exponential(1.0), 1.0, 2.0)


@pytest.fixture
def half_family():
    return ScaledFamily(ParetoRV(0.5, 1.0), 1.0, 2.0)


@pytest.fixture
def state_one():
    return TargetSet.states([1.0])


# criterion key ("5a", "7", ...) -> (passed, detail)
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion(capsys):
    def record(key: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[key] = (bool(ok), detail)
        with capsys.disabled():
            print(f"\n[criterion {key}] {'PASS' if ok else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    groups: dict[int, list] = {}
    for key, (ok, detail) in ACCEPTANCE.items():
        groups.setdefault(int(key.rstrip("abcdefgh")), []).append((key, ok, detail))
    terminalreporter.section("acceptance criteria")
    for crit in sorted(groups):
        parts = sorted(groups[crit])
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for key, sub_ok, detail in parts:
            terminalreporter.write_line(f"    {key:<3} {'PASS' if sub_ok else 'FAIL'}  {detail}")
