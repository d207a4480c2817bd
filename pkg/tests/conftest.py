import pytest

from evostrat.benchmark import Category, DomainSpec, generate_benchmark
from evostrat.search import gated_tree_size

from toy import UnplantedDomain, unplanted

MICRO_DOMAIN = DomainSpec(max_depth=4, categories=(Category("micro", 0.2, (1, 4), 2.0**-7),))
MICRO_TREE_LIMIT = 500


def _micro(count):
    bench = generate_benchmark(2024, count=count, domain=MICRO_DOMAIN, name="micro")
    return [p for p in bench.problems if gated_tree_size(p, MICRO_TREE_LIMIT) <= MICRO_TREE_LIMIT]


@pytest.fixture(scope="session")
def micro_problems():
    """Planted micro problems whose whole gated tree has at most 500 nodes."""
    problems = _micro(300)
    assert len(problems) >= 200
    return problems


@pytest.fixture(scope="session")
def unplanted_micro(micro_problems):
    """The same trees without the planted path; some are unsolvable."""
    domain = UnplantedDomain(MICRO_DOMAIN)
    return [unplanted(p, domain) for p in micro_problems]


@pytest.fixture(scope="session")
def small_benchmark():
    return generate_benchmark(7, count=14)


@pytest.fixture(scope="session")
def default_benchmark():
    return generate_benchmark(0xC0FFEE)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
