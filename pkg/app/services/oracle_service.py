"""
Brute-force minimizer of the discrete action on tiny grids.

Independent of the Newton machinery: cyclic coordinate descent with a scalar
line minimization per node, restarted from random perturbations of the
initial guess.  Used as ground truth for the solver.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from app.exceptions import PreconditionError
from app.grid import Domain, Grid, ScalarField, boundary_profile, impose_boundary
from app.integrand import integrand_for
from app.potential import PotentialSpec
from app.services.action_service import DiscreteAction
from app.services.solver_service import initial_guess
from app.utils.logger import log_solve

logger = logging.getLogger(__name__)

MAX_ORACLE_UNKNOWNS = 25
ROUNDOFF = 4.0 * np.finfo(float).eps


@dataclass
class OracleResult:
    solution: ScalarField
    action: float
    restart_actions: List[float] = field(default_factory=list)
    sweeps: List[int] = field(default_factory=list)

    @property
    def restart_spread(self) -> float:
        return float(max(self.restart_actions) - min(self.restart_actions))


class CoordinateDescent:
    """Cyclic coordinate descent evaluating only the cells around the moving node."""

    def __init__(self, grid: Grid, ps: PotentialSpec, integrand, tol: float = 1e-10, max_sweeps: int = 20000):
        self.grid = grid
        self.ps = ps
        self.integrand = integrand
        self.tol = tol
        self.max_sweeps = max_sweeps

    def _patch_value(self, values: np.ndarray, i: int, j: int) -> float:
        grid = self.grid
        r0, c0 = max(i - 1, 0), max(j - 1, 0)
        r1, c1 = min(i, grid.Nt - 1), min(j, grid.Nx - 1)
        v = values[r0:r1 + 2, c0:c1 + 2]
        a, b, c, d = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
        p1 = (b + d - a - c) / (2.0 * grid.ht)
        p2 = (c + d - a - b) / (2.0 * grid.hx)
        uc = 0.25 * (a + b + c + d)
        x2c = grid.x2c[c0:c1 + 1][None, :]
        return float(grid.cell_area * np.sum(self.integrand.value(p1, p2) - self.ps.V(x2c, uc)))

    def run(self, start: ScalarField) -> Tuple[ScalarField, int]:
        values = np.array(start.values, copy=True)
        nodes = [(i, j) for i in range(1, self.grid.Nt) for j in range(1, self.grid.Nx)]
        scale = max(self.grid.ht, self.grid.hx)
        for sweep in range(1, self.max_sweeps + 1):
            largest_move = 0.0
            for i, j in nodes:
                old = values[i, j]

                def local(z, i=i, j=j):
                    values[i, j] = z
                    return self._patch_value(values, i, j)

                result = minimize_scalar(local, bracket=(old - scale, old + scale), method="brent",
                                         options={"xtol": 1e-12})
                current = local(old)
                # moves that do not lower the patch value beyond roundoff are rejected
                if result.fun < current - ROUNDOFF * (1.0 + abs(current)):
                    values[i, j] = result.x
                    largest_move = max(largest_move, abs(result.x - old))
                else:
                    values[i, j] = old
            if largest_move <= self.tol:
                return ScalarField(self.grid, values), sweep
        logger.warning(f"Coordinate descent stopped after {self.max_sweeps} sweeps")
        return ScalarField(self.grid, values), self.max_sweeps


@log_solve
def oracle_minimize(dom: Domain, grid: Grid, eps: float, ps: PotentialSpec, restarts: int = 20, seed: int = 0,
                    theta: float = 1.5, beta: float = 1.25, shrink: float = 1.0, integrand: Optional[object] = None,
                    tol: float = 1e-10) -> OracleResult:
    """
    Minimize the discrete action by restarted coordinate descent.

    Args:
        dom: domain
        grid: grid with at most 25 interior nodes
        eps: regularization parameter
        ps: potential
        restarts: number of random restarts
        seed: seed of the perturbation generator
        shrink: safe-box shrink of the fast extension
        integrand: optional integrand strategy (defaults to the fast extension)

    Returns:
        OracleResult holding the best field, its action and every restart's action
    """
    if grid.n_interior > MAX_ORACLE_UNKNOWNS:
        raise PreconditionError(
            f"Oracle is limited to {MAX_ORACLE_UNKNOWNS} interior nodes, grid has {grid.n_interior}"
        )
    if integrand is None:
        integrand = integrand_for(eps, theta, beta, shrink)
    functional = DiscreteAction(grid, ps, integrand)
    descent = CoordinateDescent(grid, ps, integrand, tol=tol)
    rng = np.random.default_rng(seed)
    base = initial_guess(eps, dom, grid, beta)
    amplitude = 0.1 * boundary_profile(0.0, eps, beta, dom)

    best: Optional[ScalarField] = None
    best_value = np.inf
    result = OracleResult(solution=base, action=np.inf)
    for k in range(restarts):
        noise = np.zeros(grid.shape)
        noise[1:-1, 1:-1] = amplitude * rng.uniform(-1.0, 1.0, size=(grid.Nt - 1, grid.Nx - 1))
        start = impose_boundary(base.replace(base.values + noise), eps, dom, beta)
        u, sweeps = descent.run(start)
        value = functional.value(u)
        result.restart_actions.append(value)
        result.sweeps.append(sweeps)
        logger.debug(f"Oracle restart {k}: action={value:.15g} after {sweeps} sweeps")
        if value < best_value:
            best, best_value = u, value
    result.solution = best
    result.action = best_value
    logger.info(f"Oracle eps={eps:g}: best action {best_value:.15g}, restart spread {result.restart_spread:.3e}")
    return result
