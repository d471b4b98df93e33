import numpy as np
import pytest

from multisplit import RngSpec, make_dataset, sigma_for_snr, toeplitz_design, sample_beta


@pytest.fixture
def rng_spec():
    return RngSpec(12345)


def simulated_dataset(seed, n=60, p=30, rho=0.5, support=(3, 17), strength=1.0, snr=16.0):
    """Small Toeplitz instance with a known support, for integration tests."""
    spec = RngSpec(seed)
    x = toeplitz_design(n, p, rho, spec.stream("design", 0))
    beta = np.zeros(p)
    beta[list(support)] = strength
    sigma_sq = sigma_for_snr(beta, rho, snr) if beta.any() else 1.0
    y = x @ beta + np.sqrt(sigma_sq) * spec.stream("simulation-noise", 0).standard_normal(n)
    return make_dataset(y, x), beta
