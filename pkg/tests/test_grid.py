import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exceptions import DomainError, EvaluationError, GridIndexError
from app.grid import (
    Domain,
    Grid,
    ScalarField,
    boundary_profile,
    boundary_profile_derivative,
    cell_gradient,
    cell_gradients,
    impose_boundary,
    linear_interpolant,
    quadrature,
)


def test_domain_validation():
    """Test the domain parameter checks"""
    with pytest.raises(DomainError):
        Domain(T=0.0)
    with pytest.raises(DomainError):
        Domain(L=-1.0)
    with pytest.raises(DomainError):
        Domain(n=1)
    assert Domain(g=2.0, A=0.5).gA == pytest.approx(1.0)


def test_grid_validation(domain):
    """Test the grid invariants"""
    with pytest.raises(DomainError):
        Grid(domain, 1, 8)
    with pytest.raises(DomainError):
        Grid(domain, 8, 7)
    grid = Grid(domain, 4, 6)
    assert grid.shape == (5, 7)
    assert grid.ht == pytest.approx(0.25)
    assert grid.hx == pytest.approx(1.0 / 3.0)
    assert grid.n_interior == 15
    assert grid.x2[grid.Nx // 2] == pytest.approx(0.0, abs=1e-15)


def test_boundary_profile_values(domain):
    """Test U_eps at the center, the walls and with eps = 0"""
    assert boundary_profile(0.0, 0.0, 1.25, domain) == pytest.approx(1.0)
    assert boundary_profile(0.0, 0.1, 1.25, domain) == pytest.approx(1.0 + 0.1 ** 1.25 / 2.0)
    assert boundary_profile(1.0, 0.1, 1.25, domain) == 0.0
    assert boundary_profile(-1.0, 0.1, 1.25, domain) == 0.0
    values = boundary_profile(np.array([-0.5, 0.5]), 0.0, 1.25, domain)
    np.testing.assert_allclose(values, [0.5, 0.5])


def test_boundary_profile_rejects_outside(domain):
    """Test |x2| > L is rejected"""
    with pytest.raises(DomainError):
        boundary_profile(1.5, 0.1, 1.25, domain)


def test_boundary_profile_derivative_matches_differences(domain):
    """Test U_eps' against central differences away from the kink"""
    x = np.array([-0.7, -0.3, 0.2, 0.6])
    h = 1e-6
    fd = (boundary_profile(x + h, 0.1, 1.25, domain) - boundary_profile(x - h, 0.1, 1.25, domain)) / (2 * h)
    np.testing.assert_allclose(boundary_profile_derivative(x, 0.1, 1.25, domain), fd, rtol=1e-6)


def test_impose_boundary_sets_traces(small_grid, domain):
    """Test the traces of X_eps after imposing the boundary data"""
    u = impose_boundary(ScalarField(small_grid, np.ones(small_grid.shape)), 0.1, domain)
    profile = boundary_profile(small_grid.x2, 0.1, 1.25, domain)
    np.testing.assert_array_equal(u.values[0], -profile)
    np.testing.assert_array_equal(u.values[-1], profile)
    assert np.all(u.values[1:-1, 0] == 0.0)
    assert np.all(u.values[1:-1, -1] == 0.0)
    assert np.all(u.values[1:-1, 1:-1] == 1.0)


def test_scalar_field_is_immutable(small_grid):
    """Test that field values cannot be written in place"""
    u = ScalarField.zeros(small_grid)
    with pytest.raises(ValueError):
        u.values[0, 0] = 1.0
    with pytest.raises(DomainError):
        ScalarField(small_grid, np.zeros((3, 3)))


def test_cell_gradients_exact_for_bilinear(small_grid):
    """Test that cell gradients of a bilinear function are exact at centers"""
    u = ScalarField.from_function(small_grid, lambda x1, x2: 2.0 * x1 - 3.0 * x2 + 0.5 * x1 * x2)
    p1, p2, uc = cell_gradients(u)
    X1c, X2c = small_grid.cell_centers()
    np.testing.assert_allclose(p1, 2.0 + 0.5 * X2c, atol=1e-12)
    np.testing.assert_allclose(p2, -3.0 + 0.5 * X1c, atol=1e-12)
    np.testing.assert_allclose(uc, 2.0 * X1c - 3.0 * X2c + 0.5 * X1c * X2c, atol=1e-12)


def test_cell_gradient_matches_vectorized(random_field):
    """Test the single-cell gradient against the vectorized one"""
    p1, p2, _ = cell_gradients(random_field)
    np.testing.assert_allclose(cell_gradient(random_field, (3, 5)), [p1[3, 5], p2[3, 5]])
    with pytest.raises(GridIndexError):
        cell_gradient(random_field, (8, 0))


def test_linear_interpolant_carries_traces(small_grid, domain):
    """Test that the affine interpolant has the boundary data of X_eps"""
    u = linear_interpolant(small_grid, 0.05)
    np.testing.assert_array_equal(impose_boundary(u, 0.05, domain).values, u.values)


def test_quadrature_rejects_non_finite(small_grid):
    """Test that a non-finite integrand names the first bad cell"""
    u = ScalarField.zeros(small_grid)

    def integrand(x1c, x2c, p1, p2, uc):
        out = np.ones_like(p1)
        out[2, 3] = np.nan
        return out

    with pytest.raises(EvaluationError) as excinfo:
        quadrature(u, integrand)
    assert excinfo.value.cell == (2, 3)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_quadrature_integrates_affine_exactly(a, b, c):
    """Test the midpoint rule on affine integrands"""
    grid = Grid(Domain(T=2.0, L=0.5), 6, 4)
    u = ScalarField.zeros(grid)
    value = quadrature(u, lambda x1c, x2c, p1, p2, uc: a + b * x1c + c * x2c)
    assert value == pytest.approx(2.0 * (a + b * 1.0), abs=1e-10)
