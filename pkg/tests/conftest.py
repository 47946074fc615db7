import numpy as np
import pytest

from app import create_app
from app.grid import Domain, Grid, ScalarField
from app.potential import get_potential
from app.services.cache_service import CacheService
from app.services.solver_service import SolveConfig, initial_guess


@pytest.fixture
def app():
    """Command application without log handlers"""
    return create_app(testing=True)


@pytest.fixture(autouse=True)
def clear_cache():
    """Start every test with an empty shared cache"""
    CacheService().clear()
    yield
    CacheService().clear()


@pytest.fixture
def domain():
    """Default nondimensional domain g = A = L = T = 1, n = 2"""
    return Domain()


@pytest.fixture
def small_grid(domain):
    """8 x 8 grid on the default domain"""
    return Grid(domain, 8, 8)


@pytest.fixture
def tiny_grid(domain):
    """4 x 4 grid (3 x 3 interior nodes) for oracle comparisons"""
    return Grid(domain, 4, 4)


@pytest.fixture
def example_potential(domain):
    """Example potential without shift"""
    return get_potential("example", domain)


@pytest.fixture
def zero_potential(domain):
    """V = 0"""
    return get_potential("zero", domain)


@pytest.fixture
def smooth_field(small_grid):
    """Smooth field with the boundary data of X_eps at eps = 0.2"""
    return initial_guess(0.2, small_grid.domain, small_grid)


@pytest.fixture
def random_field(small_grid):
    """Deterministic random interior perturbation of the eps = 0.2 initial guess"""
    rng = np.random.default_rng(7)
    base = initial_guess(0.2, small_grid.domain, small_grid)
    noise = np.zeros(small_grid.shape)
    noise[1:-1, 1:-1] = 0.05 * rng.standard_normal((small_grid.Nt - 1, small_grid.Nx - 1))
    return ScalarField(small_grid, base.values + noise)


@pytest.fixture
def quick_solver():
    """Short schedule with loose Newton tolerance for fast solver tests"""
    return SolveConfig(eps_schedule=(0.2, 0.1), newton_tol=1e-8)
