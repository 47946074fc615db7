"""
Discrete action A_eps(u) = sum over cells of ht hx [F_hat(grad u) - V(x2, u)].

Gradients and values at cell centers are linear in the four cell nodes, so
the exact derivatives with respect to nodal values follow from the chain rule
through the coefficient vectors below.  Nodes of cell (i, j) are ordered
(i, j), (i+1, j), (i, j+1), (i+1, j+1).
"""
import logging
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix

from app.exceptions import EvaluationError
from app.grid import Grid, ScalarField, cell_gradients, quadrature
from app.integrand import integrand_for
from app.potential import PotentialSpec

logger = logging.getLogger(__name__)


class DiscreteAction:
    """
    Action functional on a fixed grid for one integrand and one potential.

    Args:
        grid: tensor grid
        ps: potential V
        integrand: object exposing value(p1, p2) and
            evaluate(p1, p2) -> (value, g1, g2, h11, h12, h22)
    """

    def __init__(self, grid: Grid, ps: PotentialSpec, integrand):
        self.grid = grid
        self.ps = ps
        self.integrand = integrand
        ht, hx = grid.ht, grid.hx
        self.c1 = np.array([-1.0, 1.0, -1.0, 1.0]) / (2.0 * ht)
        self.c2 = np.array([-1.0, -1.0, 1.0, 1.0]) / (2.0 * hx)
        self.c0 = np.full(4, 0.25)
        self._node_index = self._cell_nodes(grid)
        self._interior = np.arange(grid.shape[0] * grid.shape[1]).reshape(grid.shape)[1:-1, 1:-1].ravel()

    @staticmethod
    def _cell_nodes(grid: Grid) -> np.ndarray:
        k = np.arange(grid.shape[0] * grid.shape[1]).reshape(grid.shape)
        return np.stack([k[:-1, :-1], k[1:, :-1], k[:-1, 1:], k[1:, 1:]], axis=-1)

    def _cells(self, u: ScalarField):
        p1, p2, uc = cell_gradients(u)
        _, X2c = self.grid.cell_centers()
        return p1, p2, uc, X2c

    def value(self, u: ScalarField) -> float:
        """Midpoint quadrature of the integrand; +inf when the kinetic part is infinite somewhere."""
        p1, p2, _, _ = self._cells(u)
        kinetic = np.asarray(self.integrand.value(p1, p2), dtype=float)
        if np.any(np.isposinf(kinetic)):
            return np.inf
        ps = self.ps
        return quadrature(u, lambda x1c, x2c, q1, q2, uc: self.integrand.value(q1, q2) - ps.V(x2c, uc))

    def gradient(self, u: ScalarField) -> np.ndarray:
        """Derivative with respect to the interior nodal values (row-major)."""
        p1, p2, uc, X2c = self._cells(u)
        _, g1, g2, _, _, _ = self.integrand.evaluate(p1, p2)
        dV = self.ps.dzV(X2c, uc)
        local = self.grid.cell_area * (
            g1[..., None] * self.c1 + g2[..., None] * self.c2 - dV[..., None] * self.c0
        )
        self._require_finite(local.sum(axis=-1), "gradient")
        full = np.bincount(self._node_index.ravel(), weights=local.ravel(), minlength=u.values.size)
        return full[self._interior]

    def hessian(self, u: ScalarField):
        """Sparse symmetric Hessian on the interior nodes (csc)."""
        p1, p2, uc, X2c = self._cells(u)
        _, _, _, h11, h12, h22 = self.integrand.evaluate(p1, p2)
        d2V = self.ps.dz2V(X2c, uc)
        c1, c2, c0 = self.c1, self.c2, self.c0
        cross = np.outer(c1, c2) + np.outer(c2, c1)
        local = self.grid.cell_area * (
            h11[..., None, None] * np.outer(c1, c1)
            + h12[..., None, None] * cross
            + h22[..., None, None] * np.outer(c2, c2)
            - d2V[..., None, None] * np.outer(c0, c0)
        )
        self._require_finite(local.sum(axis=(-1, -2)), "hessian")
        nodes = self._node_index
        rows = np.broadcast_to(nodes[..., :, None], local.shape)
        cols = np.broadcast_to(nodes[..., None, :], local.shape)
        size = u.values.size
        full = coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()
        inner = full[self._interior][:, self._interior]
        return ((inner + inner.T) * 0.5).tocsc()

    def el_residual(self, u: ScalarField) -> ScalarField:
        """
        Strong-form residual D^2F_hat(grad u):D^2u + dzV(x2, u) at interior nodes.

        Second-order central differences; the boundary ring is zero.
        """
        grid = self.grid
        v = u.values
        ht, hx = grid.ht, grid.hx
        c = v[1:-1, 1:-1]
        u1 = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2.0 * ht)
        u2 = (v[1:-1, 2:] - v[1:-1, :-2]) / (2.0 * hx)
        u11 = (v[2:, 1:-1] - 2.0 * c + v[:-2, 1:-1]) / ht ** 2
        u22 = (v[1:-1, 2:] - 2.0 * c + v[1:-1, :-2]) / hx ** 2
        u12 = (v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]) / (4.0 * ht * hx)
        _, _, _, h11, h12, h22 = self.integrand.evaluate(u1, u2)
        _, X2 = grid.node_coordinates()
        residual = np.zeros(grid.shape)
        residual[1:-1, 1:-1] = h11 * u11 + 2.0 * h12 * u12 + h22 * u22 + self.ps.dzV(X2[1:-1, 1:-1], c)
        return ScalarField(grid, residual)

    @staticmethod
    def _require_finite(cell_values: np.ndarray, what: str):
        bad = ~np.isfinite(cell_values)
        if np.any(bad):
            cell = tuple(int(k) for k in np.argwhere(bad)[0])
            raise EvaluationError(f"Non-finite {what} contribution at cell {cell}", cell=cell)


def discrete_action(grid: Grid, ps: PotentialSpec, eps: float, theta: float = 1.5, beta: float = 1.25,
                    shrink: float = 1.0, integrand: Optional[object] = None) -> DiscreteAction:
    """DiscreteAction with the fast extension at eps (the degenerate F at eps = 0) unless an integrand is given."""
    if integrand is None:
        integrand = integrand_for(eps, theta, beta, shrink)
    return DiscreteAction(grid, ps, integrand)


def action(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25) -> float:
    return discrete_action(u.grid, ps, eps, theta, beta).value(u)


def gradient(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25) -> np.ndarray:
    return discrete_action(u.grid, ps, eps, theta, beta).gradient(u)


def hessian(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25):
    return discrete_action(u.grid, ps, eps, theta, beta).hessian(u)


def el_residual(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25) -> ScalarField:
    return discrete_action(u.grid, ps, eps, theta, beta).el_residual(u)
