import numpy as np
import pytest

from app.exceptions import DomainError, NonConvergenceError, PreconditionError
from app.grid import Domain, Grid, impose_boundary
from app.integrand import QuadraticIntegrand
from app.services.action_service import action, discrete_action
from app.services.solver_service import (
    SolveConfig,
    SolveReport,
    continuation_solve,
    geometric_schedule,
    initial_guess,
    initial_guess_bound,
    newton_solve,
    successive_differences,
)


def test_geometric_schedule_default():
    """Test the default schedule halves from 0.2 and ends at 1e-3"""
    schedule = geometric_schedule()
    assert schedule[0] == 0.2
    assert schedule[1] == pytest.approx(0.1)
    assert schedule[-1] == 1e-3
    assert all(b < a for a, b in zip(schedule, schedule[1:]))


def test_geometric_schedule_validation():
    """Test the ratio and range checks"""
    with pytest.raises(DomainError):
        geometric_schedule(ratio=1.0)
    with pytest.raises(DomainError):
        geometric_schedule(start=0.01, stop=0.1)


def test_solve_config_validation():
    """Test that every invalid solver setting is reported at once"""
    with pytest.raises(DomainError) as excinfo:
        SolveConfig(eps_schedule=(0.1, 0.2), ls_slope=0.6, shrink=0.0)
    message = str(excinfo.value)
    assert "strictly decreasing" in message
    assert "ls_slope" in message
    assert "shrink" in message


def test_solve_config_couples_beta_to_theta():
    """Test beta < 3 - theta at construction"""
    with pytest.raises(DomainError) as excinfo:
        SolveConfig(eps_schedule=(0.2,), theta=1.8, beta=1.5)
    assert "beta must lie in (1, 3 - theta) = (1, 1.2)" in str(excinfo.value)
    assert SolveConfig(eps_schedule=(0.2,), theta=1.8, beta=1.1).beta == 1.1


def test_initial_guess_carries_boundary_data(small_grid, domain):
    """Test that the cosine start has the traces of X_eps"""
    u = initial_guess(0.2, domain, small_grid)
    np.testing.assert_array_equal(impose_boundary(u, 0.2, domain).values, u.values)


def test_initial_guess_bound_dominates_its_action(small_grid, domain, example_potential):
    """Test the explicit bound against the action of the initial guess"""
    for eps in (0.2, 0.05):
        u = initial_guess(eps, domain, small_grid)
        assert action(u, eps, example_potential) <= initial_guess_bound(eps, domain, small_grid, example_potential)


def test_newton_on_quadratic_action(small_grid, domain, zero_potential):
    """Test that Newton solves the quadratic action in one step"""
    cfg = SolveConfig(eps_schedule=(0.2,), newton_tol=1e-10)
    u0 = initial_guess(0.2, domain, small_grid)
    u, record = newton_solve(u0, 0.2, cfg, zero_potential, integrand=QuadraticIntegrand())
    assert record.converged
    assert record.iterations <= 2
    functional = discrete_action(small_grid, zero_potential, 0.2, integrand=QuadraticIntegrand())
    assert np.max(np.abs(functional.gradient(u))) <= 1e-10


def test_newton_converges_on_example(small_grid, domain, example_potential, quick_solver):
    """Test convergence, monotone actions and exact boundary data at eps = 0.2"""
    u0 = initial_guess(0.2, domain, small_grid)
    u, record = newton_solve(u0, 0.2, quick_solver, example_potential)
    assert record.converged
    assert record.grad_norm <= quick_solver.newton_tol
    history = np.array(record.action_history)
    assert np.all(np.diff(history) <= 1e-12 * (1.0 + np.abs(history[:-1])))
    assert record.action == pytest.approx(action(u, 0.2, example_potential), rel=1e-14)
    np.testing.assert_array_equal(u.values[0], u0.values[0])
    np.testing.assert_array_equal(u.values[:, -1], u0.values[:, -1])


def test_newton_rejects_wrong_boundary(random_field, quick_solver, example_potential):
    """Test the boundary precondition of the start field"""
    values = np.array(random_field.values, copy=True)
    values[0, 3] += 1.0
    with pytest.raises(PreconditionError):
        newton_solve(random_field.replace(values), 0.2, quick_solver, example_potential)


def test_continuation_records_every_eps(small_grid, domain, example_potential, quick_solver):
    """Test the warm-started schedule and the per-eps callback"""
    seen = []
    solutions, report = continuation_solve(
        quick_solver, domain, small_grid, example_potential,
        on_solution=lambda eps, u, rec: seen.append(eps),
    )
    assert seen == [0.2, 0.1]
    assert report.eps_values == [0.2, 0.1]
    assert all(r.converged for r in report.records)
    for eps, u in solutions:
        np.testing.assert_array_equal(impose_boundary(u, eps, domain).values, u.values)
    assert len(successive_differences(solutions)) == 1


def test_continuation_reports_failed_eps(small_grid, domain, example_potential):
    """Test NonConvergenceError with the last iterate and the partial report"""
    cfg = SolveConfig(eps_schedule=(0.2,), newton_tol=1e-300, max_newton_iters=1)
    with pytest.raises(NonConvergenceError) as excinfo:
        continuation_solve(cfg, domain, small_grid, example_potential)
    error = excinfo.value
    assert error.eps == 0.2
    assert isinstance(error.report, SolveReport)
    assert not error.report.records[-1].converged
    assert error.last_iterate.grid == small_grid


def test_continuation_rejects_foreign_grid(domain, quick_solver, example_potential):
    """Test that the grid must live on the solved domain"""
    grid = Grid(Domain(T=2.0), 8, 8)
    with pytest.raises(PreconditionError):
        continuation_solve(quick_solver, domain, grid, example_potential)
