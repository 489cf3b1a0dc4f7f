import os
import sys

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from lrm.rm import Alphabet, RewardMachine

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

AB = Alphabet(["a", "b", "c"])
A, B, C = (AB.encode([n]) for n in "abc")


@pytest.fixture
def abc():
    return AB


def traces(symbols=(A, B, C), max_len=8, max_traces=5, min_len=1):
    """Strategy: a small corpus of observation sequences."""
    seq = st.lists(st.sampled_from(symbols), min_size=min_len, max_size=max_len).map(tuple)
    return st.lists(seq, min_size=1, max_size=max_traces)


@st.composite
def machines(draw, symbols=(A, B, C), max_states=3):
    n = draw(st.integers(1, max_states))
    trans = {}
    for u in range(n):
        for s in symbols:
            trans[(u, s)] = draw(st.integers(0, n - 1))
    return RewardMachine(n, trans)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
