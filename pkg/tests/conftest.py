import numpy as np
import pytest
from hypothesis import settings

from sepfeat.core import DataMatrix
from sepfeat.synthetic import PairwiseMixtureSpec, generate_pairwise_mixture

settings.register_profile("repo", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_mixture():
    """4 clusters, 6 informative of 30 features, 160 rows."""
    spec = PairwiseMixtureSpec(k_true=4, d_total=30, separation=6.0, n_per_cluster=40, seed=7)
    return generate_pairwise_mixture(spec)


def matrix(values, **kw):
    return DataMatrix.from_array(np.asarray(values, float), **kw)


_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record ``(criterion, passed, detail)``; repeated at the end of the run."""

    def record(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
