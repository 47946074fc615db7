import pytest

from app.exceptions import PreconditionError
from app.run_config import Diagnostics
from app.services.oracle_service import MAX_ORACLE_UNKNOWNS, oracle_minimize
from app.services.solver_service import SolveConfig, initial_guess, newton_solve


def test_oracle_agrees_with_newton(tiny_grid, domain, example_potential):
    """Test that coordinate descent and Newton reach the same minimal action"""
    result = oracle_minimize(domain, tiny_grid, 0.2, example_potential, restarts=3, seed=1)
    cfg = SolveConfig(eps_schedule=(0.2,), newton_tol=1e-10)
    _, record = newton_solve(initial_guess(0.2, domain, tiny_grid), 0.2, cfg, example_potential)
    assert abs(result.action - record.action) <= 1e-6 * (1.0 + abs(record.action))
    assert len(result.restart_actions) == 3
    assert result.restart_spread <= 1e-7


def test_oracle_limits_unknowns(small_grid, domain, example_potential):
    """Test that grids beyond the oracle size are refused"""
    assert small_grid.n_interior > MAX_ORACLE_UNKNOWNS
    with pytest.raises(PreconditionError):
        oracle_minimize(domain, small_grid, 0.2, example_potential, restarts=1)


@pytest.mark.slow
def test_oracle_with_configured_restarts(tiny_grid, domain, example_potential):
    """Test agreement and restart spread with the configured number of restarts"""
    restarts = Diagnostics().oracle_restarts
    result = oracle_minimize(domain, tiny_grid, 0.2, example_potential, restarts=restarts, seed=0,
                             tol=Diagnostics().oracle_tol)
    cfg = SolveConfig(eps_schedule=(0.2,), newton_tol=1e-10)
    _, record = newton_solve(initial_guess(0.2, domain, tiny_grid), 0.2, cfg, example_potential)
    assert len(result.restart_actions) == restarts == 20
    assert abs(result.action - record.action) <= 1e-6 * (1.0 + abs(record.action))
    assert result.restart_spread <= 1e-7
