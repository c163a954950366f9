import numpy as np
import pytest

from targex.estimation import GaussianPrior
from targex.model import SystemModel
from targex.spectral import FrequencyGrid


def chained_system(rho=0.49, n=4, sigma_w=1.0):
    A = np.diag([rho] * n) + np.diag([rho] * (n - 1), 1)
    B = np.zeros((n, 1))
    B[-1, 0] = rho
    return SystemModel(A=A, B=B, sigma_w=sigma_w)


@pytest.fixture(scope="session")
def paper_model():
    """The hard-to-learn chained system used by the shipped experiments."""
    return chained_system()


@pytest.fixture(scope="session")
def paper_grid():
    return FrequencyGrid(T=100, omegas=np.array([0.0, 0.1, 0.2, 0.3, 0.4]))


@pytest.fixture(scope="session")
def paper_prior(paper_model):
    """Prior centered close to the truth, D0^-1 = 1e-3 I, delta = 0.01."""
    rng = np.random.default_rng(11)
    theta_tr = paper_model.theta()
    d = theta_tr.size
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    center = theta_tr + (rng.uniform() ** (1 / d) / np.sqrt(1000.0)) * u
    q = paper_model.n_phi
    ref = GaussianPrior(theta_prior=center, Dtilde0=np.eye(q), delta=0.01,
                        n_x=paper_model.n_x)
    return GaussianPrior(theta_prior=center, Dtilde0=ref.c_delta * 1000.0 * np.eye(q),
                         delta=0.01, n_x=paper_model.n_x)


def random_stable_system(rng, n=None, rho_max=0.9, sigma_w=0.0):
    n = n or int(rng.integers(2, 5))
    while True:
        A = rng.standard_normal((n, n)) * 0.5
        rho = np.max(np.abs(np.linalg.eigvals(A)))
        if rho < rho_max:
            break
    B = rng.standard_normal((n, 1))
    return SystemModel(A=A, B=B, sigma_w=sigma_w)
