import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import qmc

from app.integrand import LAMBDA_0, F_eps, RegularizationParams, grad_F_eps
from app.reference_extension import (
    F_hat_reference,
    F_hat_reference_derivatives,
    F_tilde_derivatives,
    F_tilde_reference,
    build_reference_params,
    bump_kernel,
    level_set_distance,
    smooth_max,
)
from app.services.cache_service import CacheService

RP = RegularizationParams(0.2)


def _halton(n, dim=2, seed=0):
    """n scrambled Halton points in [-5, 5]^dim"""
    return qmc.scale(qmc.Halton(d=dim, seed=seed).random(n), [-5.0] * dim, [5.0] * dim)


@pytest.fixture
def rep():
    """Reference-extension parameters at eps = 0.2"""
    return build_reference_params(RP)


def test_bump_kernel_is_normalized():
    """Test that the kernel integrates to one and vanishes outside [-1, 1]"""
    total, _ = quad(lambda s: float(bump_kernel(np.array(s))), -1.0, 1.0)
    assert total == pytest.approx(1.0, rel=1e-10)
    assert float(bump_kernel(np.array(1.5))) == 0.0


def test_build_reference_params_radii(rep):
    """Test the level and the blending radii"""
    assert rep.N > F_eps(0.0, 0.0, RP)
    assert rep.blend_radius > 0.0
    assert rep.moll_radius == pytest.approx(rep.blend_radius / 4.0)
    assert rep.smooth_max_width == pytest.approx(rep.blend_radius / 8.0)
    assert rep.A2 < 1.0 + RP.eps


def test_build_reference_params_is_cached():
    """Test that the second request is served from the cache"""
    cache = CacheService()
    first = build_reference_params(RP)
    hits = cache.hits
    second = build_reference_params(RP)
    assert cache.hits == hits + 1
    assert second == first


def test_smooth_max_bounds_and_derivative():
    """Test the smoothed maximum against max and its slope against differences"""
    width = 0.1
    for y1, y2 in [(0.0, 0.0), (0.03, 0.0), (-0.05, 0.02), (1.0, 0.0), (0.0, 1.0)]:
        value, slope, curvature = smooth_max(y1, y2, width)
        assert value >= max(y1, y2) - 1e-15
        assert 0.0 <= slope <= 1.0
        assert curvature >= 0.0
    h = 1e-6
    up = smooth_max(0.02 + h, 0.0, width)[0]
    down = smooth_max(0.02 - h, 0.0, width)[0]
    assert smooth_max(0.02, 0.0, width)[1] == pytest.approx((up - down) / (2 * h), rel=1e-6)
    assert smooth_max(1.0, 0.0, width) == (1.0, 1.0, 0.0)


def test_reference_equals_F_eps_deep_inside(rep):
    """Test that the reference extension is F_eps away from the level set"""
    for p1, p2 in [(0.5, 0.3), (-2.0, -0.9), (4.0, 1.1)]:
        assert level_set_distance(p1, p2, rep) > rep.blend_radius
        value, gradient, _ = F_hat_reference_derivatives(p1, p2, RP, rep)
        assert value == pytest.approx(F_eps(p1, p2, RP), rel=1e-14)
        np.testing.assert_allclose(gradient, grad_F_eps(p1, p2, RP), rtol=1e-14)


def test_smallest_convex_extension_exceeds_level_outside(rep):
    """Test that supporting planes lift the extension above N outside the level set"""
    assert F_tilde_reference(0.0, 1.3, RP, rep) > rep.N
    assert F_tilde_reference(0.0, -1.5, RP, rep) > rep.N


def test_reference_is_finite_across_the_strip_edge(rep):
    """Test that the reference extension is defined beyond |p2| = 1 + eps"""
    values = [F_hat_reference(1.0, p2, RP, rep) for p2 in (1.25, 2.0, -3.0)]
    assert all(np.isfinite(values))


def test_strip_room_limits_the_blend_shell(rep):
    """Test that a collapsed delta is flagged at eps = 0.2"""
    assert rep.strip_limited
    assert rep.blend_radius < 1e-10


def _midpoint_gaps(points, rep):
    gaps = []
    for a1, a2, b1, b2 in points:
        fa = F_hat_reference(a1, a2, RP, rep)
        fb = F_hat_reference(b1, b2, RP, rep)
        mid = F_hat_reference(0.5 * (a1 + b1), 0.5 * (a2 + b2), RP, rep)
        gaps.append((0.5 * (fa + fb) - mid) / (1.0 + abs(fa) + abs(fb)))
    return np.array(gaps)


def _in_elliptic_region(p1, p2):
    return abs(p2) >= 1.0 + RP.eps - RP.eps ** (4.0 * RP.theta) or abs(p1) >= 1.0


def _check_properties(points, rep):
    for p1, p2 in points:
        value, gradient, hessian = F_hat_reference_derivatives(p1, p2, RP, rep)
        product = gradient[0] * p1
        assert -RP.eps - 1e-6 <= product <= 3.0 * value + 1e-6 * (1.0 + abs(value))
        if _in_elliptic_region(p1, p2):
            assert np.linalg.eigvalsh(hessian)[0] >= LAMBDA_0 - 1e-8
        value, gradient, _ = F_tilde_derivatives(p1, p2, RP, rep)
        product = gradient[0] * p1
        slack = 1e-6 * (1.0 + abs(value))
        assert -slack <= product <= 2.0 * value + slack


def test_reference_is_midpoint_convex_on_halton_pairs(rep):
    """Test midpoint convexity of the reference extension on quasi-random pairs"""
    assert np.all(_midpoint_gaps(_halton(24, dim=4), rep) >= -1e-10)


def test_reference_growth_and_ellipticity_on_halton_points(rep):
    """Test -eps <= d_p1 F_hat p1 <= 3 F_hat, the 1/128 floor away from the box and 0 <= d_p1 F_tilde p1 <= 2 F_tilde"""
    _check_properties(_halton(48), rep)


@pytest.mark.slow
def test_reference_properties_on_many_halton_points(rep):
    """Test the convexity, growth and ellipticity properties on a dense quasi-random sample"""
    assert np.all(_midpoint_gaps(_halton(512, dim=4, seed=1), rep) >= -1e-10)
    _check_properties(_halton(1024, seed=1), rep)
