"""
Reference extension of F_eps, built the long way.

F_tilde is the smallest convex extension of F_eps restricted to the sublevel
set K_N = {F_eps <= N}; its boundary is the ellipse
p1^2 + 2 N p2^2 = 2 N (1+eps)^2 - eps^theta.  Outside K_N the extension is the
supremum of the tangent planes of F_eps along that ellipse.  F_hat_reference
mollifies F_tilde, adds (N/4)(Q - 1) and glues the result to F_eps with a
smoothed maximum in a shell of width delta around the ellipse.

This module is a validation oracle; the solver never calls it.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from app.integrand import F_eps, RegularizationParams, SafeBox, grad_F_eps, hess_F_eps
from app.services.cache_service import cached

logger = logging.getLogger(__name__)

SCAN_POINTS = 256
ANGLE_TOL = 1e-10


@dataclass(frozen=True)
class ReferenceExtensionParams:
    N: float
    moll_radius: float
    blend_radius: float
    quad_points: int
    smooth_max_width: float
    A1: float
    A2: float
    # delta was cut by the strip room rather than the box distance
    strip_limited: bool = False


def bump_kernel(s: np.ndarray) -> np.ndarray:
    """Normalized C^2 bump (35/32)(1 - s^2)^3 on [-1, 1]."""
    return np.where(np.abs(s) < 1.0, 35.0 / 32.0 * (1.0 - s * s) ** 3, 0.0)


def _kernel_cdf(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    return 35.0 / 32.0 * (x - x ** 3 + 0.6 * x ** 5 - x ** 7 / 7.0) + 0.5


def _kernel_first_moment(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    return 35.0 / 32.0 * (x ** 2 / 2.0 - 0.75 * x ** 4 + x ** 6 / 2.0 - x ** 8 / 8.0 - 0.125)


def _ellipse(t, rep: ReferenceExtensionParams):
    return rep.A1 * np.cos(t), rep.A2 * np.sin(t)


def _distance_to_box(q1, q2, box: SafeBox):
    d1 = np.maximum(np.abs(q1) - box.p1_max, 0.0)
    d2 = np.maximum(np.abs(q2) - box.p2_max, 0.0)
    return np.hypot(d1, d2)


def _scan_then_refine(objective, maximize: bool) -> Tuple[float, float]:
    """Global extremum of a 2*pi-periodic scalar function of the angle."""
    sign = -1.0 if maximize else 1.0
    ts = np.linspace(-np.pi, np.pi, SCAN_POINTS, endpoint=False)
    values = sign * objective(ts)
    k = int(np.argmin(values))
    step = 2.0 * np.pi / SCAN_POINTS
    result = minimize_scalar(
        lambda t: sign * float(objective(np.array([t]))[0]),
        bounds=(ts[k] - step, ts[k] + step),
        method="bounded",
        options={"xatol": ANGLE_TOL},
    )
    # ties: keep whichever is better
    if result.fun <= values[k]:
        return float(result.x), float(sign * result.fun)
    return float(ts[k]), float(sign * values[k])


@cached("reference_params")
def build_reference_params(rp: RegularizationParams, quad_points: int = 5) -> ReferenceExtensionParams:
    """
    Level N = max F_eps on the safe box + 1 and the blending radii.

    delta is half the distance between the safe box and the ellipse, further
    limited so that the delta-shell stays inside the widened strip where F_eps
    is defined; eta = delta/4 and the smoothed-max width is delta/8.
    """
    box = SafeBox.for_params(rp)
    N = float(F_eps(box.p1_max, box.p2_max, rp)) + 1.0
    A1 = float(np.sqrt(2.0 * N * rp.a2 - rp.eps_theta))
    A2 = float(np.sqrt(rp.a2 - rp.eps_theta / (2.0 * N)))
    trial = ReferenceExtensionParams(N, 0.0, 0.0, quad_points, 0.0, A1, A2)

    def gap(t):
        q1, q2 = _ellipse(t, trial)
        return _distance_to_box(q1, q2, box)

    _, box_distance = _scan_then_refine(gap, maximize=False)
    strip_room = (1.0 + rp.eps) - A2
    delta = 0.5 * min(box_distance, strip_room)
    strip_limited = strip_room < box_distance
    if strip_limited:
        logger.warning(
            f"Reference extension at eps={rp.eps:g}: strip room {strip_room:.3e} cuts delta to {delta:.3e} "
            f"(box distance {box_distance:.3e}); the blend shell is numerically empty"
        )
    logger.debug(f"Reference extension: N={N:.6e}, delta={delta:.3e}, A1={A1:.3e}, A2={A2:.6f}")
    return ReferenceExtensionParams(N, delta / 4.0, delta, quad_points, delta / 8.0, A1, A2, strip_limited)


def _quotient(num, num1, num2, sig, sig1, sig2):
    f = num / sig
    f1 = num1 / sig - num * sig1 / sig ** 2
    f2 = num2 / sig - 2.0 * num1 * sig1 / sig ** 2 - num * sig2 / sig ** 2 + 2.0 * num * sig1 ** 2 / sig ** 3
    return f, f1, f2


def _support(t, rep: ReferenceExtensionParams, rp: RegularizationParams):
    """Ellipse point, tangent-plane slope G and its first two angle derivatives."""
    c, s = np.cos(t), np.sin(t)
    A1, A2, N = rep.A1, rep.A2, rep.N
    sig = rp.a2 - (A2 * s) ** 2
    sig1 = -2.0 * A2 * A2 * s * c
    sig2 = -2.0 * A2 * A2 * (c * c - s * s)
    G1 = _quotient(A1 * c, -A1 * s, -A1 * c, sig, sig1, sig2)
    G2 = _quotient(2.0 * N * A2 * s, 2.0 * N * A2 * c, -2.0 * N * A2 * s, sig, sig1, sig2)
    point = (A1 * c, A2 * s)
    tangent = (-A1 * s, A2 * c)
    return point, tangent, G1, G2


def _plane(t, p1, p2, rep, rp):
    (q1, q2), _, G1, G2 = _support(t, rep, rp)
    return rep.N + G1[0] * (p1 - q1) + G2[0] * (p2 - q2)


def _inside_level(p1: float, p2: float, rp: RegularizationParams, N: float) -> bool:
    return abs(p2) < 1.0 + rp.eps and float(F_eps(p1, p2, rp)) <= N


def F_tilde_derivatives(p1: float, p2: float, rp: RegularizationParams, rep: ReferenceExtensionParams):
    """Value, gradient and Hessian of the smallest convex extension at one point."""
    if _inside_level(p1, p2, rp, rep.N):
        return (
            float(F_eps(p1, p2, rp)),
            grad_F_eps(p1, p2, rp),
            hess_F_eps(p1, p2, rp),
        )
    t_star, value = _scan_then_refine(lambda t: _plane(t, p1, p2, rep, rp), maximize=True)
    (q1, q2), (d1, d2), G1, G2 = _support(t_star, rep, rp)
    gradient = np.array([G1[0], G2[0]])
    dG = np.array([G1[1], G2[1]])
    ddG = np.array([G1[2], G2[2]])
    curvature = ddG @ np.array([p1 - q1, p2 - q2]) - dG @ np.array([d1, d2])
    if curvature < 0.0:
        hessian = -np.outer(dG, dG) / curvature
    else:
        hessian = np.zeros((2, 2))
    return value, gradient, hessian


def F_tilde_reference(p1: float, p2: float, rp: RegularizationParams, rep: ReferenceExtensionParams) -> float:
    """Smallest convex extension of F_eps restricted to K_N."""
    return F_tilde_derivatives(p1, p2, rp, rep)[0]


def level_set_distance(p1: float, p2: float, rep: ReferenceExtensionParams) -> float:
    def dist(t):
        q1, q2 = _ellipse(t, rep)
        return np.hypot(p1 - q1, p2 - q2)

    return _scan_then_refine(dist, maximize=False)[1]


def _stencil(rep: ReferenceExtensionParams):
    nodes, weights = np.polynomial.legendre.leggauss(rep.quad_points)
    w = weights * bump_kernel(nodes)
    w = w / w.sum()
    return nodes, w


def _mollified_check(p1, p2, rp, rep):
    """(N/4)(Q - 1) plus F_tilde convolved with the tensor kernel of radius eta."""
    nodes, w = _stencil(rep)
    value, gradient, hessian = 0.0, np.zeros(2), np.zeros((2, 2))
    for a, wa in zip(nodes, w):
        for b, wb in zip(nodes, w):
            v, g, h = F_tilde_derivatives(p1 - rep.moll_radius * a, p2 - rep.moll_radius * b, rp, rep)
            value += wa * wb * v
            gradient = gradient + wa * wb * g
            hessian = hessian + wa * wb * h
    N = rep.N
    denom = 2.0 * N * rp.a2 - rp.eps_theta
    Q = (p1 * p1 + 2.0 * N * p2 * p2) / denom
    value += 0.25 * N * (Q - 1.0)
    gradient = gradient + 0.25 * N * np.array([2.0 * p1, 4.0 * N * p2]) / denom
    hessian = hessian + 0.25 * N * np.diag([2.0, 4.0 * N]) / denom
    return value, gradient, hessian


def smooth_max(y1: float, y2: float, width: float) -> Tuple[float, float, float]:
    """
    max(y1, y2) mollified along y1 - y2 with the bump kernel.

    Returns:
        (value, m', m'') where value = y2 + m(y1 - y2)
    """
    delta = y1 - y2
    x = delta / width
    if x <= -1.0:
        return y2, 0.0, 0.0
    if x >= 1.0:
        return y1, 1.0, 0.0
    m = delta * _kernel_cdf(x) - width * _kernel_first_moment(x)
    return y2 + float(m), float(_kernel_cdf(x)), float(bump_kernel(x)) / width


def F_hat_reference_derivatives(p1: float, p2: float, rp: RegularizationParams, rep: ReferenceExtensionParams):
    """Value, gradient and Hessian of the composite reference extension."""
    d = level_set_distance(p1, p2, rep)
    inside = _inside_level(p1, p2, rp, rep.N)
    if inside and d > rep.blend_radius:
        return float(F_eps(p1, p2, rp)), grad_F_eps(p1, p2, rp), hess_F_eps(p1, p2, rp)
    check = _mollified_check(p1, p2, rp, rep)
    if d > rep.blend_radius:
        return check
    base = (float(F_eps(p1, p2, rp)), grad_F_eps(p1, p2, rp), hess_F_eps(p1, p2, rp))
    value, m1, m2 = smooth_max(base[0], check[0], rep.smooth_max_width)
    dgrad = base[1] - check[1]
    gradient = check[1] + m1 * dgrad
    hessian = check[2] + m1 * (base[2] - check[2]) + m2 * np.outer(dgrad, dgrad)
    return value, gradient, hessian


def F_hat_reference(p1: float, p2: float, rp: RegularizationParams, rep: ReferenceExtensionParams) -> float:
    return F_hat_reference_derivatives(p1, p2, rp, rep)[0]
