import numpy as np
import pytest

from pottsgas import meanfield as mf
from pottsgas.kernels import KacKernel


@pytest.fixture(scope="session")
def coex():
    """Coexistence point at beta=1, S=3: (lambda_beta, minimizer set)."""
    lam_b, ms = mf.critical_lambda(1.0, 3)
    return lam_b, ms


@pytest.fixture(scope="session")
def kern25():
    return KacKernel(gamma=0.25, d=2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
