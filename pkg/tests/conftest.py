import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oascen.grid import GeneratorSpec, GridModel, Line

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repo", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def toy_a() -> GridModel:
    """Two nodes, one 50 MW line, cheap unit at node 1 and dear unit at node 2."""
    return GridModel(
        nodes=("1", "2"), ref="1",
        lines=(Line("1", "2", 10.0, 50.0),),
        generators=(GeneratorSpec("g1", "1", 0.0, 10.0, 0.0, 100.0),
                    GeneratorSpec("g2", "2", 0.0, 20.0, 0.0, 100.0)),
        base_mva=100.0,
    )


def toy_b() -> GridModel:
    return GridModel(
        nodes=("1",), ref="1", lines=(),
        generators=(GeneratorSpec("g1", "1", 0.0, 0.0, 1.0, 100.0),
                    GeneratorSpec("g2", "1", 0.0, 0.0, 2.0, 100.0)),
    )


def random_grid(rng, n_nodes=None, n_gens=None, quadratic=False) -> GridModel:
    """Connected random grid with at most 4 nodes and 4 generators."""
    n = int(n_nodes or rng.integers(1, 5))
    g = int(n_gens or rng.integers(2, 5))
    nodes = tuple(str(k + 1) for k in range(n))
    pairs = set()
    for k in range(1, n):                       # random spanning tree
        pairs.add((int(rng.integers(0, k)), k))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in pairs and rng.random() < 0.3:
                pairs.add((i, j))
    lines = tuple(Line(nodes[i], nodes[j], float(rng.uniform(2, 20)), float(rng.uniform(20, 120)))
                  for i, j in sorted(pairs))
    gens = tuple(GeneratorSpec(f"g{k}", nodes[int(rng.integers(0, n))], float(rng.uniform(0, 30)),
                               float(rng.uniform(5, 50)),
                               float(rng.uniform(0.01, 0.3)) if quadratic else 0.0,
                               float(rng.uniform(30, 150)))
                 for k in range(g))
    return GridModel(nodes=nodes, ref=nodes[0], lines=lines, generators=gens)


@pytest.fixture
def grid_a():
    return toy_a()


@pytest.fixture
def grid_b():
    return toy_b()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
