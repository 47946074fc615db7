import logging

import numpy as np

from app.grid import Domain
from app.services.subsolution_service import SubsolutionFields, energy_profile, lambda_max_closed_form
from app.utils.logger import log_check

logger = logging.getLogger(__name__)

# |rho| = 1 on resting cells of pure phase, up to this slack
PHASE_TOL = 1e-9


def _first_cell(bad):
    return tuple(int(k) for k in np.argwhere(bad)[0])


@log_check
def verify_membership(sf: SubsolutionFields, dom: Domain, min_margin: float = 0.0):
    """
    Check the relaxed-hull inequalities on the mask and the constraint set off it.

    With v = 0 the three strict inequalities on mask cells are

        m^2 / (n (1 + rho)^2) < e0 + e1
        m^2 / (n (1 - rho)^2) < e0 - e1
        m^2 / (n (1 - rho^2)) < e0 + rho e1

    Off the mask a cell is either pure phase at rest (|rho| = 1, m = 0) or a
    mixed resting cell (|rho| < 1 with vanishing momentum, energies and stress).
    Momentum dropped from off-mask cells must stay below the mask threshold.

    Args:
        sf: reconstructed fields
        dom: domain
        min_margin: smallest acceptable margin of the strict inequalities

    Returns:
        Dict with is_valid, errors and the three minimal margins
    """
    errors = []
    n = sf.n
    mask = sf.mask
    rho, m, e0, e1 = sf.rho, sf.m, sf.e0, sf.e1
    margins = {}
    if np.any(mask):
        with np.errstate(divide="ignore", invalid="ignore"):
            plus = e0 + e1 - m * m / (n * (1.0 + rho) ** 2)
            minus = e0 - e1 - m * m / (n * (1.0 - rho) ** 2)
            eigen = e0 + rho * e1 - lambda_max_closed_form(sf)
        for name, margin in (("plus_phase", plus), ("minus_phase", minus), ("stress", eigen)):
            values = np.where(mask, margin, np.inf)
            margins[name] = float(values.min())
            bad = mask & ~(margin > min_margin)
            if np.any(bad):
                errors.append(
                    f"{name} inequality fails at {int(bad.sum())} cells, first {_first_cell(bad)} "
                    f"(margin {margins[name]:.3e})"
                )
        sign_bad = mask & (rho * e1 > 0.0)
        if np.any(sign_bad):
            errors.append(f"rho e1 > 0 at {int(sign_bad.sum())} cells, first {_first_cell(sign_bad)}")
    else:
        margins = {"plus_phase": None, "minus_phase": None, "stress": None}

    off = ~mask
    if np.any(np.abs(rho) > 1.0 + PHASE_TOL):
        errors.append(f"|rho| exceeds 1 at {int(np.sum(np.abs(rho) > 1.0 + PHASE_TOL))} cells")
    resting_bad = off & ((m != 0.0) | (e0 != 0.0) | (e1 != 0.0) | (sf.sigma_nn != 0.0))
    if np.any(resting_bad):
        errors.append(f"off-mask cells carry momentum or energy, first {_first_cell(resting_bad)}")
    dropped = off & (np.abs(sf.dropped_m) > sf.tau)
    if np.any(dropped):
        errors.append(
            f"{int(dropped.sum())} off-mask cells have |d_x1 u| > tau = {sf.tau:g}, "
            f"first {_first_cell(dropped)} (max {float(np.abs(sf.dropped_m).max()):.3e})"
        )
    pure = off & (np.abs(np.abs(rho) - 1.0) <= PHASE_TOL)
    return {
        "is_valid": not errors,
        "errors": errors,
        "margins": margins,
        "mask_cells": int(mask.sum()),
        "pure_phase_cells": int(pure.sum()),
        "mixed_resting_cells": int((off & ~pure).sum()),
        "max_dropped_momentum": float(np.abs(sf.dropped_m).max()),
    }


@log_check
def admissibility(sf: SubsolutionFields, dom: Domain):
    """
    Energy admissibility per time layer: margin = gA L^2 - int (n/2)(e0 + rho e1) + rho gA x2.

    Only interior layers are asserted; the first and last layers are reported.
    """
    rhs = dom.gA * dom.L ** 2
    margins = rhs - energy_profile(sf, dom)
    interior = margins[1:-1]
    errors = []
    if interior.size and not np.all(interior > 0.0):
        layer = int(np.argmin(interior)) + 1
        errors.append(f"admissibility fails at layer {layer}: margin {float(interior.min()):.3e}")
    return {
        "is_valid": not errors,
        "errors": errors,
        "margins": margins,
        "min_interior_margin": float(interior.min()) if interior.size else None,
        "first_layer_margin": float(margins[0]),
        "last_layer_margin": float(margins[-1]),
    }
