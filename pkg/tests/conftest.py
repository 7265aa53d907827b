import itertools

import numpy as np
import pytest

from edml.model import MISSING, Network

ACCEPTANCE_KEY = "acceptance"


def pytest_terminal_summary(terminalreporter):
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for key, value in getattr(rep, "user_properties", ()):
                if key == ACCEPTANCE_KEY and rep.when == "call":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines)):
            terminalreporter.write_line(line)


def enumerate_states(network: Network, example=None):
    """Pure-Python joint enumeration, independent of numpy broadcasting."""
    n = len(network)
    for state in itertools.product((0, 1), repeat=n):
        if example is not None and any(e != MISSING and e != s for e, s in zip(example, state)):
            continue
        p = 1.0
        for v, ps in enumerate(network.parents):
            u = 0
            for q in ps:
                u = (u << 1) | state[q]
            t = float(network.theta[v][u])
            p *= t if state[v] else 1.0 - t
        yield state, p


@pytest.fixture
def fork():
    """S <- H -> E with the CPTs used throughout the worked examples."""
    return Network.from_names(
        ["S", "H", "E"],
        {"S": ["H"], "E": ["H"]},
        {"H": [0.5], "S": [0.3, 0.8], "E": [0.2, 0.9]},
    )


@pytest.fixture
def chain():
    return Network.from_names(["H", "E"], {"E": ["H"]}, {"H": [0.3], "E": [0.2, 0.9]})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
