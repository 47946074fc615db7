"""Desk-scale acceptance runs on converged fields; all marked slow."""
import numpy as np
import pytest

from app.grid import Domain, Grid
from app.potential import get_potential
from app.services.analysis_service import (
    KineticRun,
    dissipation_check,
    energy_trace,
    first_integral_deviation,
    kinetic_jump_vs_T,
    mixing_zone,
    row_extremes,
    trace_attainment,
)
from app.services.solver_service import SolveConfig, continuation_solve

pytestmark = pytest.mark.slow

DOMAIN = Domain()


def _solve(n, potential="example", schedule=None, T=1.0):
    dom = Domain(T=T) if T != 1.0 else DOMAIN
    cfg = SolveConfig() if schedule is None else SolveConfig(eps_schedule=schedule)
    ps = get_potential(potential, dom, "auto")
    solutions, report = continuation_solve(cfg, dom, Grid(dom, n, n), ps)
    return dict(solutions), report, ps


def _at(solutions, eps):
    key = min(solutions, key=lambda e: abs(e - eps))
    return key, solutions[key]


@pytest.fixture(scope="module")
def run_64():
    """Default schedule down to eps = 1e-3 on a 64 x 64 grid"""
    return _solve(64)


@pytest.fixture(scope="module")
def run_32():
    """Default schedule down to eps = 1e-3 on a 32 x 32 grid"""
    return _solve(32)


def test_maximum_principle_and_monotonicity(run_64):
    """Test |u| <= U_eps, d_x1 u >= 0 and |d_x2 u| <= 1 + eps at the final eps"""
    solutions, _, _ = run_64
    eps, u = _at(solutions, 1e-3)
    extremes = row_extremes(u, eps)
    assert extremes["max_principle_excess"] <= 1e-6
    assert extremes["min_dx1"] >= -1e-6
    assert extremes["max_abs_dx2"] <= 1.0 + eps + 1e-6


def test_first_integral_is_constant_and_converges(run_32, run_64):
    """Test the first integral at eps = 0.05 and its decay under refinement"""
    deviations = []
    for solutions, _, ps in (run_32, run_64):
        eps, u = _at(solutions, 0.05)
        trace = energy_trace(u, eps, ps)
        deviations.append(first_integral_deviation(trace))
    assert deviations[1] <= 1e-3 * (abs(trace.mean_H) + 1.0)
    assert deviations[0] >= 1.5 * deviations[1]


def test_energy_dissipation(run_64):
    """Test that E_leg does not increase and follows the dissipation rate at eps = 0.05"""
    solutions, _, ps = run_64
    eps, u = _at(solutions, 0.05)
    report = dissipation_check(energy_trace(u, eps, ps), ps, tol=1e-3, mismatch_tol=1e-2)
    assert report["is_valid"], report["errors"]


def test_energy_conservation_without_f():
    """Test |dE_leg/dx1| <= 1e-3 for f = 0"""
    solutions, _, ps = _solve(64, "no_dissipation", schedule=(0.2, 0.1, 0.05))
    eps, u = _at(solutions, 0.05)
    report = dissipation_check(energy_trace(u, eps, ps), ps, tol=1e-3)
    assert report["is_valid"], report["errors"]


def test_boundary_traces_are_attained(run_32, run_64):
    """Test B1 <= 2b + 2hx, monotone A1 and C1, and their decay under refinement"""
    tables = []
    for solutions, _, _ in (run_32, run_64):
        _, u = _at(solutions, 1e-3)
        table = trace_attainment(u)
        assert table["is_valid"], table["errors"]
        assert table["A1_monotone"]
        assert table["C1_monotone"]
        tables.append(table)
    coarse, fine = tables
    assert fine["A1"][-1] < coarse["A1"][-1]
    assert fine["C1"][-1] < coarse["C1"][-1]


def test_kinetic_jump_over_final_times():
    """Test the jumps against A_1/T and their start-end agreement for T = 1, 2, 4"""
    runs = []
    for T in (1.0, 2.0, 4.0):
        solutions, report, ps = _solve(16, T=T)
        eps, u = _at(solutions, 1e-3)
        runs.append(KineticRun(T, report.records[-1].action, energy_trace(u, eps, ps)))
    result = kinetic_jump_vs_T(runs, tol=1e-2)
    assert result["is_valid"], result["errors"]
    assert [row["T"] for row in result["rows"]] == [1.0, 2.0, 4.0]


def test_mixing_zone_of_concave_potential():
    """Test a nonempty, hole-free mixing zone for the concave potential"""
    solutions, _, _ = _solve(32, "concave", schedule=(0.2, 0.1, 0.05, 0.025))
    _, u = _at(solutions, 0.025)
    zone = mixing_zone(u, 1e-4)
    assert zone.mask.any()
    assert zone.holes == [0] * zone.n_components
    assert np.count_nonzero(zone.labels) == int(zone.mask.sum())
