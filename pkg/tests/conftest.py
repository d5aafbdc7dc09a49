import numpy as np
import pytest

from qspattern import default_params, solve_steady_state
from qspattern.series import SeriesContext
from qspattern.wna import wna_report


@pytest.fixture(scope="session")
def params():
    return default_params(5e-3)


@pytest.fixture(scope="session")
def steady(params):
    return solve_steady_state(params)[0]


@pytest.fixture(scope="session")
def report(params):
    return wna_report(params, j_max=6)


def random_context(rng, k_range=(0.3, 1.2)) -> SeriesContext:
    """Random positive parameter draw for the series recursions.

    Motility Taylor data is drawn as a geometrically damped sequence so
    the profile has a finite but comfortable radius of convergence.
    """
    m_max = 12
    decay = rng.uniform(0.4, 1.2)
    D = rng.uniform(0.5, 2.0) * decay ** np.arange(m_max + 1) * rng.uniform(-1, 1, m_max + 1)
    D[0] = rng.uniform(0.5, 2.0)
    return SeriesContext(
        k=rng.uniform(*k_range),
        D_coeffs=D,
        lam=rng.uniform(0.5, 2.0),
        rho_star=rng.uniform(0.3, 1.5),
        alpha0=rng.uniform(0.5, 2.0),
        u_star=rng.uniform(0.5, 3.0),
        g1=rng.uniform(0.1, 1.0),
        g2=rng.uniform(-1.0, 1.0),
    )
