import sys

import numpy as np
import pytest

from imcflow import FactorPair, ProblemSpec, generate_problem, sample_bernoulli


def random_orthogonal(rng, r):
    q, rr = np.linalg.qr(rng.standard_normal((r, r)))
    return q * np.sign(np.diag(rr))


def random_factors(rng, n1, n2, r, scale=1.0):
    return FactorPair(scale * rng.standard_normal((n1, r)), scale * rng.standard_normal((n2, r)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_problem():
    """(features, truth, obs) for a 30x24 problem with n = (6, 5), r = 2, p = 0.4."""
    features, truth = generate_problem(ProblemSpec(30, 24, 6, 5, 2, seed=3))
    obs = sample_bernoulli(features, truth, 0.4, seed=3)
    return features, truth, obs


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is None or not acceptance.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.VERDICTS, key=lambda s: int(s.split()[1].rstrip("]"))):
        terminalreporter.write_line(line)
