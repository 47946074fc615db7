"""
Recovery operator: maps a field with the degenerate boundary data (eps = 0)
to a field with the data of X_eps whose regularized action does not exceed
the degenerate action in the limit.

Construction along every grid column x2:
  1. cosine caps of width delta next to x1 = 0 and x1 = T;
  2. the field itself, compressed in time onto [delta, T - delta] and damped
     by cos(delta) so that it meets the caps continuously;
  3. smooth continuation outside [0, T], then averaging in x1 against a bump
     kernel of radius eta < delta;
  4. the boundary correction U_hat_eps - U_hat_0 and exact traces.
"""
import logging
from typing import Optional

import numpy as np

from app.exceptions import PreconditionError
from app.grid import ScalarField, boundary_profile, cell_gradients, impose_boundary, linear_interpolant
from app.potential import PotentialSpec
from app.reference_extension import bump_kernel
from app.services.action_service import action

logger = logging.getLogger(__name__)

STENCIL_POINTS = 8


def _stretched_field(t: np.ndarray, u: ScalarField, U0: np.ndarray, delta: float) -> np.ndarray:
    """Capped, compressed and continued field at times t (shape (n, k)) on every column."""
    grid = u.grid
    T = grid.domain.T
    x1 = grid.x1
    out = np.empty(t.shape + (grid.Nx + 1,))
    stretch = np.clip(T * (t - delta) / (T - 2.0 * delta), 0.0, T)
    for j in range(grid.Nx + 1):
        interior = np.cos(delta) * np.interp(stretch, x1, u.values[:, j])
        out[..., j] = np.select(
            [t < 0.0, t <= delta, t < T - delta, t <= T],
            [
                -(2.0 - np.cos(t)) * U0[j],
                -np.cos(t) * U0[j],
                interior,
                np.cos(T - t) * U0[j],
            ],
            default=(2.0 - np.cos(T - t)) * U0[j],
        )
    return out


def recovery_sequence(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25,
                      delta: Optional[float] = None, eta: Optional[float] = None) -> ScalarField:
    """
    Build the recovery field for eps.

    Args:
        u: field with the traces of X (eps = 0) and finite degenerate action
        eps: target regularization
        ps: potential, used for the finiteness precondition
        delta: cap width (defaults to eps)
        eta: kernel radius in x1 (defaults to eps^theta)

    Returns:
        Field carrying the boundary data of X_eps

    Raises:
        PreconditionError: infinite action of u, or delta/eta out of range
    """
    grid = u.grid
    dom = grid.domain
    delta = eps if delta is None else delta
    eta = eps ** theta if eta is None else eta
    if not 0.0 < eta < delta < dom.T / 2.0:
        raise PreconditionError(f"need 0 < eta < delta < T/2, got eta={eta}, delta={delta}")
    degenerate = action(u, 0.0, ps, theta, beta)
    if not np.isfinite(degenerate):
        logger.warning("Recovery requested for a field with infinite degenerate action")
        raise PreconditionError("Recovery sequence needs a field with finite degenerate action")

    U0 = boundary_profile(grid.x2, 0.0, beta, dom)
    nodes, weights = np.polynomial.legendre.leggauss(STENCIL_POINTS)
    weights = weights * bump_kernel(nodes)
    weights = weights / weights.sum()
    samples = grid.x1[:, None] - eta * nodes[None, :]
    smoothed = np.einsum("k,ikj->ij", weights, _stretched_field(samples, u, U0, delta))

    correction = linear_interpolant(grid, eps, beta).values - linear_interpolant(grid, 0.0, beta).values
    result = impose_boundary(ScalarField(grid, smoothed + correction), eps, dom, beta)
    logger.debug(f"Recovery field for eps={eps:g} (delta={delta:g}, eta={eta:.3g})")
    return result


def h1_distance(u: ScalarField, v: ScalarField) -> float:
    """Discrete H1 distance: cell-center gradients and values under the midpoint rule."""
    p1, p2, uc = cell_gradients(u.replace(u.values - v.values))
    return float(np.sqrt(u.grid.cell_area * np.sum(p1 * p1 + p2 * p2 + uc * uc)))
