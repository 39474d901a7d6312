import numpy as np
import pytest

from powerctl.model import ModelParams


@pytest.fixture
def sec4():
    """Benchmark parameter set (arrival probability 0.1)."""
    return ModelParams.good_bad(theta=0.2, beta1=0.4, rho=0.1, lam=1.5, n0=1.0)


def sec4_at(rho, n0=1.0, p_max=10.0):
    return ModelParams.good_bad(theta=0.2, beta1=0.4, rho=rho, lam=1.5, n0=n0, p_max=p_max)


def random_good_bad(rng, lam_range=(0.0, 3.0)):
    """Random feasible GOOD/BAD parameter set (power cap kept slack)."""
    n0 = rng.uniform(0.1, 5.0)
    return ModelParams.good_bad(
        theta=rng.uniform(0.05, 0.9),
        beta1=rng.uniform(0.05, 0.95),
        rho=rng.uniform(0.05, 0.9),
        lam=rng.uniform(*lam_range),
        n0=n0,
        p_max=1000.0 * n0,
    )


def random_simplex(rng, n=4):
    return rng.dirichlet(np.ones(n))
