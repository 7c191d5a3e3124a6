import numpy as np
import pytest
from hypothesis import settings

from bvsfosr.sampler import PosteriorDraws

settings.register_profile("default", deadline=None)
settings.load_profile("default")


def make_draws(b, Z, K, p, sigma2=None, theta=None, tau2=None, mu=None):
    """PosteriorDraws from explicit (chains, draws, ...) arrays."""
    b = np.asarray(b, dtype=float)
    c, d = b.shape[:2]
    return PosteriorDraws(
        b=b,
        Z=np.asarray(Z),
        theta=np.full((c, d, p), 0.5) if theta is None else theta,
        mu=mu,
        sigma2=np.ones((c, d)) if sigma2 is None else sigma2,
        tau2=np.ones((c, d, K * p)) if tau2 is None else tau2,
        iterations=np.arange(1, d + 1),
        K=K,
        p=p,
        seed=0,
        config={},
        hyperparameters={},
    )


@pytest.fixture
def draws_factory():
    return make_draws


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line and return whether it passed."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
