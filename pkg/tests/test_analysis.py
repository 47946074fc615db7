from types import SimpleNamespace

import numpy as np
import pytest

from app.exceptions import DomainError, PreconditionError
from app.grid import Grid, ScalarField, cell_gradients, linear_interpolant
from app.integrand import DegenerateIntegrand, QuadraticIntegrand, RegularizationParams
from app.potential import get_potential
from app.services.analysis_service import (
    KineticRun,
    boundary_band,
    barrier_check,
    dissipation_check,
    energy_trace,
    first_integral_deviation,
    kinetic_jump_vs_T,
    mixing_zone,
    one_sided_min_principle,
    oscillation_modulus,
    row_extremes,
    trace_attainment,
    uniform_energy_bound,
)
from app.services.solver_service import SolveConfig, SolveRecord, SolveReport, continuation_solve, initial_guess


def _from_increments(grid, increments, scale):
    """Field whose x1-differences on every node column are scale * increments"""
    values = np.zeros(grid.shape)
    values[1:] = np.cumsum(scale * increments, axis=0)
    return ScalarField(grid, values)


def _record(eps, value):
    return SolveRecord(eps=eps, action=value, grad_norm=0.0, iterations=1, line_search_steps=1,
                       el_residual_norm=0.0, lm_shift=0.0)


def test_energy_trace_shapes(smooth_field, example_potential):
    """Test node-row and layer lengths of the energy trace"""
    trace = energy_trace(smooth_field, 0.2, example_potential)
    grid = smooth_field.grid
    for name in ("E_kin", "E_pot", "E_f", "H", "D"):
        assert getattr(trace, name).shape == (grid.Nt + 1,)
    assert trace.layer_E_kin.shape == (grid.Nt,)
    assert trace.has_f
    assert len(list(trace.rows())) == grid.Nt + 1


def test_first_integral_of_affine_field(small_grid, zero_potential):
    """Test a constant H = (a^2 - b^2) L for u = a x1 + b x2 under |p|^2/2"""
    u = ScalarField.from_function(small_grid, lambda x1, x2: 1.5 * x1 + 0.5 * x2)
    trace = energy_trace(u, 0.2, zero_potential, integrand=QuadraticIntegrand())
    np.testing.assert_allclose(trace.H, (1.5 ** 2 - 0.5 ** 2) / 2.0 * 2.0)
    assert first_integral_deviation(trace) == pytest.approx(0.0, abs=1e-13)


def test_legendre_energy_is_H_without_f(small_grid, domain):
    """Test E_leg = H - int f - 2L c for the example potential with a shift c"""
    ps = get_potential("example", domain, shift=0.25)
    u = ScalarField.from_function(small_grid, lambda x1, x2: 0.3 * x1 + 0.1 * x2 * x1)
    trace = energy_trace(u, 0.2, ps)
    np.testing.assert_allclose(trace.layer_E_leg, trace.layer_H - trace.layer_E_f - 2.0 * domain.L * 0.25,
                               rtol=1e-12, atol=1e-12)


def test_trace_potentials_of_the_initial_guess(small_grid, domain):
    """Test int V along the traces -U_eps and U_eps for V = -gA z"""
    ps = get_potential("no_dissipation", domain)
    trace = energy_trace(initial_guess(0.1, domain, small_grid), 0.1, ps)
    expected = 1.0 + 2.0 * 0.1 ** 1.25 / 3.0
    assert trace.V_start == pytest.approx(expected, abs=1e-3)
    assert trace.V_end == pytest.approx(-expected, abs=1e-3)


def test_boundary_band_is_symmetric(domain, zero_potential):
    """Test that the same number of layers is dropped at each end"""
    assert [boundary_band(n) for n in (2, 8, 16, 64)] == [1, 1, 2, 8]
    u = ScalarField.zeros(Grid(domain, 16, 8))
    trace = energy_trace(u, 0.2, zero_potential, integrand=QuadraticIntegrand())
    assert trace.band == 2
    assert list(trace.interior(np.arange(16))) == list(range(2, 14))


def test_first_integral_ignores_the_boundary_band(small_grid, zero_potential):
    """Test that offsets in the end layers do not count while interior ones do"""
    u = ScalarField.from_function(small_grid, lambda x1, x2: 1.5 * x1 + 0.5 * x2)
    trace = energy_trace(u, 0.2, zero_potential, integrand=QuadraticIntegrand())
    trace.layer_H[0] += 0.3
    trace.layer_H[-1] -= 0.2
    assert first_integral_deviation(trace) == pytest.approx(0.0, abs=1e-13)
    trace.layer_H[3] += 0.1
    assert first_integral_deviation(trace) > 0.05


def test_legendre_energy_is_conserved_without_f(domain):
    """Test that a converged field with f = 0 keeps E_leg flat while E_kin + E_pot drifts"""
    grid = Grid(domain, 16, 16)
    ps = get_potential("no_dissipation", domain)
    cfg = SolveConfig(eps_schedule=(0.2,), newton_tol=1e-9)
    (_, u), = continuation_solve(cfg, domain, grid, ps)[0]
    trace = energy_trace(u, 0.2, ps)
    energy = trace.interior(trace.layer_E_leg)
    naive = trace.interior(trace.layer_E_kin + trace.layer_E_pot)
    assert np.ptp(energy) <= 1e-2 * (abs(energy.mean()) + 1.0)
    assert np.ptp(energy) < np.ptp(naive)
    assert first_integral_deviation(trace) == pytest.approx(float(np.max(np.abs(energy - energy.mean()))))


def test_degenerate_trace_adds_potential(small_grid, domain, example_potential):
    """Test H = E_kin + int V at eps = 0"""
    u = initial_guess(0.0, domain, small_grid)
    trace = energy_trace(u, 0.0, example_potential, integrand=DegenerateIntegrand())
    _, _, uc = cell_gradients(u)
    _, X2c = small_grid.cell_centers()
    potential = small_grid.hx * example_potential.V(X2c, uc).sum(axis=1)
    np.testing.assert_allclose(trace.layer_H, trace.layer_E_kin + potential, rtol=1e-13)


def test_dissipation_check_conserved_and_violated(small_grid, domain):
    """Test energy conservation without f: static in x1 passes, linear growth fails"""
    ps = get_potential("no_dissipation", domain)
    quadratic = QuadraticIntegrand()
    static = ScalarField.from_function(small_grid, lambda x1, x2: 0.5 * x2)
    report = dissipation_check(energy_trace(static, 0.2, ps, integrand=quadratic), ps)
    assert report["is_valid"], report["errors"]
    moving = ScalarField.from_function(small_grid, lambda x1, x2: x1 + 0.0 * x2)
    report = dissipation_check(energy_trace(moving, 0.2, ps, integrand=quadratic), ps)
    assert not report["is_valid"]
    assert report["errors"][0].startswith("energy not conserved")


def test_mixing_zone_counts_one_hole(small_grid):
    """Test a square ring of cells: one component with one hole"""
    increments = np.zeros((small_grid.Nt, small_grid.Nx + 1))
    increments[[2, 5]] = [0, 0, 0, 1, 0, 1, 0, 0, 0]
    increments[[3, 4]] = [0, 0, 0, 1, -1, 1, 0, 0, 0]
    u = _from_increments(small_grid, increments, 0.02 * small_grid.ht)
    zone = mixing_zone(u, tau=0.005)
    assert zone.n_components == 1
    assert zone.holes == [1]
    assert zone.components[0]["size"] == 12
    assert not zone.mask[3, 3]


def test_mixing_zone_simple(small_grid):
    """Test a full slab without holes and an empty zone"""
    slab = mixing_zone(ScalarField.from_function(small_grid, lambda x1, x2: x1 + 0.0 * x2), tau=1e-3)
    assert slab.n_components == 1 and slab.holes == [0]
    assert mixing_zone(ScalarField.zeros(small_grid), tau=1e-3).n_components == 0
    with pytest.raises(DomainError):
        mixing_zone(ScalarField.zeros(small_grid), tau=0.0)


def test_trace_attainment_of_linear_interpolant(domain):
    """Test B1(b) = b for the interpolant of the degenerate traces"""
    grid = Grid(domain, 16, 16)
    report = trace_attainment(linear_interpolant(grid, 0.0))
    assert report["is_valid"], report["errors"]
    assert len(report["B1"]) == len(report["b"]) == len(report["B1_bound"])
    assert report["C1_monotone"]
    assert report["a"][0] == 0.5


def test_oscillation_modulus_skips_large_balls(smooth_field):
    """Test the skipped note for balls leaving the domain"""
    result = oscillation_modulus(smooth_field, [(0.5, 0.0)], [0.01, 0.1, 0.5])
    assert len(result["rows"]) == 2
    assert len(result["notes"]) == 1
    assert result["grad_norm"] > 0.0


def _jump_trace(mean_H, V_start, V_end):
    return SimpleNamespace(mean_H=mean_H, V_start=V_start, V_end=V_end, layer_E_kin=np.array([mean_H, 1.0, mean_H]))


def test_kinetic_jump_needs_unit_time():
    """Test the T = 1 precondition"""
    run = KineticRun(T=2.0, action=1.0, trace=_jump_trace(1.0, 0.0, 0.0))
    with pytest.raises(PreconditionError):
        kinetic_jump_vs_T([run])


def test_kinetic_jump_rows():
    """Test the jumps mean H - int V along each trace against A_1/T"""
    runs = [
        KineticRun(T=2.0, action=0.0, trace=_jump_trace(3.0, 0.0, -0.5)),
        KineticRun(T=1.0, action=4.0, trace=_jump_trace(2.5, 0.5, 0.5)),
    ]
    report = kinetic_jump_vs_T(runs)
    assert [row["T"] for row in report["rows"]] == [1.0, 2.0]
    first, second = report["rows"]
    assert first["passes"]
    assert (first["c_start"], first["c_end"]) == (2.0, 2.0)
    assert first["layer_start"] == 2.5
    assert not second["passes"]
    assert (second["c_start"], second["c_end"]) == (3.0, 3.5)
    assert second["bound"] == 2.0
    assert len(report["errors"]) == 2


def test_row_extremes_of_initial_guess(smooth_field):
    """Test the maximum principle and monotonicity of the cosine start"""
    extremes = row_extremes(smooth_field, 0.2)
    assert extremes["max_principle_excess"] == pytest.approx(0.0, abs=1e-15)
    assert extremes["min_dx1"] >= 0.0
    assert extremes["max_abs_dx2"] <= 1.0 + 0.2 ** 1.25


def test_one_sided_min_principle(small_grid):
    """Test an interior dip of d_x1 u below the ring minimum"""
    increments = np.ones((small_grid.Nt, small_grid.Nx + 1))
    assert one_sided_min_principle(_from_increments(small_grid, increments, small_grid.ht))["is_valid"]
    increments[4, 4] = -1.0
    increments[4, 5] = -1.0
    report = one_sided_min_principle(_from_increments(small_grid, increments, small_grid.ht), [(0, 8, 0, 8)])
    assert not report["is_valid"]
    assert report["rows"][0]["interior_min"] == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        one_sided_min_principle(ScalarField.zeros(small_grid), [(0, 2, 0, 8)])


def test_barrier_check_without_potential(small_grid, zero_potential):
    """Test strict barriers for V = 0"""
    report = barrier_check(RegularizationParams(0.2), zero_potential, small_grid)
    assert report["is_valid"], report["errors"]
    assert report["max_upper"] < 0.0 < report["min_lower"]


def test_uniform_energy_bound(small_grid, example_potential):
    """Test actions against the initial-guess bound"""
    report = SolveReport([_record(0.2, -10.0), _record(0.1, -11.0)])
    result = uniform_energy_bound(report, small_grid, example_potential)
    assert result["is_valid"]
    assert result["min_action"] == -11.0
    report.append(_record(0.05, 1e9))
    assert not uniform_energy_bound(report, small_grid, example_potential)["is_valid"]
