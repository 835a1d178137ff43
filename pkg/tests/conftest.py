import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from delfsc import builtin_spec, random_channel_spec

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def two_state():
    return builtin_spec("two_state_d010")


@pytest.fixture(scope="session")
def erasure():
    return builtin_spec("erasure")


@pytest.fixture(scope="session")
def noiseless():
    return builtin_spec("identity")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def binary_words(min_size=0, max_size=6):
    return st.lists(st.integers(0, 1), min_size=min_size, max_size=max_size).map(tuple)


@st.composite
def small_specs(draw, s_max=3):
    seed = draw(st.integers(0, 2**31 - 1))
    s_size = draw(st.integers(1, s_max))
    d = draw(st.sampled_from([0.0, 0.1, 0.35, 0.7, 1.0]))
    return random_channel_spec(seed, 2, 2, s_size, d=d)


# -- acceptance summary lines -----------------------------------------------------------

_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
