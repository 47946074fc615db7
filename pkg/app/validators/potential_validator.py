"""
Sampled verification of the structural conditions on a potential.

Each condition yields {"is_valid", "errors", "witness", ...}; the combined
report has the same shape with one entry per condition.
"""
import logging

import numpy as np

from app.grid import Domain
from app.potential import PotentialSpec, compute_sV, profile_integral
from app.utils.logger import log_check

logger = logging.getLogger(__name__)

TOL = 1e-9
SAMPLES = 201
# V_sup compares trapezoid integrals; the pointwise maximum may have kinks
SUP_TOL = 1e-6


def _sample(dom: Domain, samples: int = SAMPLES):
    x2 = np.linspace(-dom.L, dom.L, samples)
    z = np.linspace(-(dom.L + 1.0), dom.L + 1.0, samples)
    return np.meshgrid(x2, z, indexing="ij")


def _witness(X2, Z, index):
    k = np.unravel_index(index, X2.shape)
    return {"x2": float(X2[k]), "z": float(Z[k])}


def check_regularity(ps: PotentialSpec, dom: Domain, samples: int = SAMPLES):
    """V and its z-derivatives finite on the band, with Lipschitz quotients controlled by the next derivative."""
    X2, Z = _sample(dom, samples)
    derivatives = [ps.V(X2, Z), ps.dzV(X2, Z), ps.dz2V(X2, Z), ps.dz3V(X2, Z)]
    errors = []
    for order, values in enumerate(derivatives):
        bad = ~np.isfinite(values)
        if np.any(bad):
            w = _witness(X2, Z, np.argmax(bad))
            errors.append(f"derivative of order {order} not finite at x2={w['x2']:.6g}, z={w['z']:.6g}")

    quotients = []
    if not errors:
        dz = Z[0, 1] - Z[0, 0]
        for order in range(3):
            quotient = np.abs(np.diff(derivatives[order], axis=1)) / dz
            bound = np.max(np.abs(derivatives[order + 1])) * (1.0 + 1e-6) + 1e-6
            quotients.append(float(quotient.max()))
            if quotient.max() > bound:
                k = np.argmax(quotient)
                w = _witness(X2[:, :-1], Z[:, :-1], k)
                errors.append(
                    f"Lipschitz quotient {quotient.max():.6g} of order {order} exceeds "
                    f"sup of the next derivative {bound:.6g} at x2={w['x2']:.6g}, z={w['z']:.6g}"
                )
    return {
        "is_valid": not errors,
        "errors": errors,
        "witness": None,
        "sup_derivatives": [float(np.max(np.abs(d))) for d in derivatives] if not errors else None,
        "lipschitz_quotients": quotients,
    }


def check_convexity(ps: PotentialSpec, dom: Domain, samples: int = SAMPLES):
    X2, Z = _sample(dom, samples)
    curvature = ps.dz2V(X2, Z)
    k = int(np.argmin(curvature))
    minimum = float(curvature.flat[k])
    if minimum >= -TOL:
        return {"is_valid": True, "errors": [], "witness": None, "min_dz2V": minimum}
    w = _witness(X2, Z, k)
    return {
        "is_valid": False,
        "errors": [f"dz2V = {minimum:.6g} < 0 at x2={w['x2']:.6g}, z={w['z']:.6g}"],
        "witness": w,
        "min_dz2V": minimum,
    }


def check_dissipation(ps: PotentialSpec, dom: Domain, samples: int = SAMPLES):
    """dz f > 0 strictly between the two obstacles."""
    if not ps.has_f:
        return {
            "is_valid": False,
            "errors": [f"potential '{ps.name}' is not written as -gAz + f"],
            "witness": None,
            "min_dzf": None,
        }
    X2, Z = _sample(dom, samples)
    # strict interior; samples landing on an obstacle up to roundoff are dropped
    inside = np.abs(Z) < dom.L - np.abs(X2) - 1e-9 * dom.L
    slope = np.where(inside, ps.dzf(X2, Z), np.inf)
    k = int(np.argmin(slope))
    minimum = float(slope.flat[k])
    if minimum > TOL:
        return {"is_valid": True, "errors": [], "witness": None, "min_dzf": minimum}
    w = _witness(X2, Z, k)
    return {
        "is_valid": False,
        "errors": [f"dzf = {minimum:.6g} is not positive at x2={w['x2']:.6g}, z={w['z']:.6g}"],
        "witness": w,
        "min_dzf": minimum,
    }


def check_supremum(ps: PotentialSpec, dom: Domain, nq: int = 128):
    """s_V = 0 and the supremum is attained on both interface cones."""
    s_v, profile = compute_sV(ps, dom, nq)
    upper = profile_integral(ps, dom, +1.0, nq)
    lower = profile_integral(ps, dom, -1.0, nq)
    scale = SUP_TOL * max(1.0, dom.gA * dom.L ** 2)
    errors = []
    if abs(s_v) > scale:
        errors.append(f"s_V = {s_v:.12g} is not zero (shift constant {ps.shift_constant:.12g})")
    for label, value in (("+(L-|x2|)", upper), ("-(L-|x2|)", lower)):
        if abs(value - s_v) > scale:
            errors.append(f"integral of V along {label} is {value:.12g}, below s_V = {s_v:.12g}")

    witness = None
    if errors:
        x2 = profile["x2"]
        cone = dom.L - np.abs(x2)
        excess = profile["values"] - np.maximum(ps.V(x2, cone), ps.V(x2, -cone))
        k = int(np.argmax(excess))
        witness = {"x2": float(x2[k]), "z": float(profile["phi"][k]), "excess": float(excess[k])}
    return {
        "is_valid": not errors,
        "errors": errors,
        "witness": witness,
        "s_V": s_v,
        "upper_integral": upper,
        "lower_integral": lower,
        "shift": ps.shift_constant,
    }


@log_check
def check_conditions(ps: PotentialSpec, dom: Domain, samples: int = SAMPLES):
    """
    Check V_reg, V_aut, V_con, V_dis and V_sup on sampled points.

    Args:
        ps: potential, with its shift already applied
        dom: domain

    Returns:
        Dict with is_valid, errors (prefixed with the condition name) and one
        sub-report per condition
    """
    conditions = {
        "V_reg": check_regularity(ps, dom, samples),
        # potentials never take x1
        "V_aut": {"is_valid": True, "errors": [], "witness": None},
        "V_con": check_convexity(ps, dom, samples),
        "V_dis": check_dissipation(ps, dom, samples),
        "V_sup": check_supremum(ps, dom),
    }
    errors = [f"{name}: {message}" for name, report in conditions.items() for message in report["errors"]]
    for name, report in conditions.items():
        logger.debug(f"{ps.name} {name}: {'pass' if report['is_valid'] else 'fail'}")
    return {
        "is_valid": not errors,
        "errors": errors,
        "conditions": conditions,
        "potential": ps.name,
        "shift": ps.shift_constant,
    }
