"""
One-dimensional Boussinesq subsolutions built from a stream function.

On the mixing mask the density is rho = d_x2 u and the vertical momentum
m = -d_x1 u; the energies e0, e1, the normal stress sigma_nn and the pressure
follow in closed form.  The two-phase dictionary maps (rho, m) to phase
fractions and velocities of two exchanging phases.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.exceptions import DegenerateCellError, DomainError
from app.grid import Domain, Grid, ScalarField, cell_gradients
from app.services.analysis_service import mixing_zone

logger = logging.getLogger(__name__)

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class SubsolutionFields:
    """Cell fields of shape (Nt, Nx); sigma is (m^2/(1-rho^2))(e_n (x) e_n - Id/n), stored as sigma_nn.

    dropped_m keeps -d_x1 u on the cells left out of the mask.
    """

    grid: Grid
    n: int
    rho: np.ndarray
    m: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    sigma_nn: np.ndarray
    p: np.ndarray
    e_tilde: np.ndarray
    mask: np.ndarray
    dropped_m: np.ndarray
    tau: float = 0.0

    def sigma(self, cell: Tuple[int, int]) -> np.ndarray:
        """Full n x n stress at one cell; the vertical direction is the last axis."""
        i, j = cell
        rho, m = self.rho[i, j], self.m[i, j]
        if m == 0.0:
            return np.zeros((self.n, self.n))
        scale = m * m / (1.0 - rho * rho)
        e_n = np.zeros(self.n)
        e_n[-1] = 1.0
        return scale * (np.outer(e_n, e_n) - np.eye(self.n) / self.n)


@dataclass(frozen=True)
class TwoPhaseFlow:
    grid: Grid
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray


def reconstruct(u: ScalarField, e_tilde_value: float, dom: Domain, tau: float = 1e-4,
                mask: Optional[np.ndarray] = None) -> SubsolutionFields:
    """
    Subsolution tuple of a stream function.

    e0 = m^2 (1 + rho^2) / (n (1 - rho^2)^2) + e_tilde
    e1 = -2 rho m^2 / (n (1 - rho^2)^2)
    sigma_nn = (m^2 / (1 - rho^2)) (1 - 1/n)
    p(x2) = -sigma_nn - gA int_{-L}^{x2} rho

    Off the mask the momentum, energies and stress vanish and rho is clamped
    to [-1, 1].

    Args:
        u: stream function
        e_tilde_value: positive constant energy excess on the mask
        dom: domain (supplies n, g, A)
        tau: mixing-mask threshold, used when mask is not given
        mask: optional precomputed cell mask

    Raises:
        DegenerateCellError: mask cells with 1 - rho^2 <= 1e-12
    """
    if not e_tilde_value > 0:
        raise DomainError(f"e_tilde must be positive, got {e_tilde_value}")
    grid = u.grid
    n = dom.n
    p1, p2, _ = cell_gradients(u)
    if mask is None:
        mask = mixing_zone(u, tau).mask
    mask = np.asarray(mask, dtype=bool)
    gap = 1.0 - p2 * p2
    degenerate = mask & (gap <= DEGENERACY_TOL)
    if np.any(degenerate):
        cells = [tuple(int(k) for k in c) for c in np.argwhere(degenerate)]
        raise DegenerateCellError(f"{len(cells)} mask cells with 1 - rho^2 <= {DEGENERACY_TOL:g}", cells)

    rho = np.where(mask, p2, np.clip(p2, -1.0, 1.0))
    m = np.where(mask, -p1, 0.0)
    safe_gap = np.where(mask, gap, 1.0)
    m2 = m * m
    e_tilde = np.where(mask, e_tilde_value, 0.0)
    e0 = np.where(mask, m2 * (1.0 + rho * rho) / (n * safe_gap ** 2), 0.0) + e_tilde
    e1 = np.where(mask, -2.0 * rho * m2 / (n * safe_gap ** 2), 0.0)
    sigma_nn = np.where(mask, m2 / safe_gap * (1.0 - 1.0 / n), 0.0)

    # int_{-L}^{x2c}: trapezoid between centers plus the half cell below the first center
    hx = grid.hx
    column = cumulative_trapezoid(rho, dx=hx, axis=1, initial=0.0) + 0.5 * hx * rho[:, :1]
    p = -sigma_nn - dom.gA * column
    logger.debug(f"Reconstructed subsolution on {int(mask.sum())} mask cells, e_tilde={e_tilde_value:g}")
    dropped_m = np.where(mask, 0.0, -p1)
    return SubsolutionFields(grid, n, rho, m, e0, e1, sigma_nn, p, e_tilde, mask, dropped_m, tau)


def kinetic_density(sf: SubsolutionFields) -> np.ndarray:
    """(n/2)(e0 + rho e1), equal to m^2 / (2 (1 - rho^2)) + (n/2) e_tilde on the mask."""
    return 0.5 * sf.n * (sf.e0 + sf.rho * sf.e1)


def lambda_max_closed_form(sf: SubsolutionFields) -> np.ndarray:
    """Largest eigenvalue of m (x) m / (1 - rho^2) - sigma for the stress above: m^2 / (n (1 - rho^2))."""
    gap = np.where(sf.mask, 1.0 - sf.rho ** 2, 1.0)
    return np.where(sf.mask, sf.m ** 2 / (sf.n * gap), 0.0)


def lambda_max_general(sf: SubsolutionFields, cells: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Largest eigenvalue of the full n x n matrix at the given cells by a symmetric eigen-solver."""
    values = []
    for i, j in cells:
        rho, m = sf.rho[i, j], sf.m[i, j]
        e_n = np.zeros(sf.n)
        e_n[-1] = m
        gap = 1.0 - rho * rho if sf.mask[i, j] else 1.0
        matrix = np.outer(e_n, e_n) / gap - sf.sigma((i, j))
        values.append(np.linalg.eigvalsh(matrix)[-1])
    return np.array(values)


def continuity_test_functions(dom: Domain):
    """
    Battery of 25 polynomials phi = (x1/T)^a ((x2 + L)/(2L))^b, a, b in 0..4,
    with their partial derivatives.
    """
    T, L = dom.T, dom.L
    battery = []
    for a in range(5):
        for b in range(5):
            def phi(x1, x2, a=a, b=b):
                return (x1 / T) ** a * ((x2 + L) / (2.0 * L)) ** b

            def d1(x1, x2, a=a, b=b):
                return 0.0 * x1 + (a * (x1 / T) ** (a - 1) / T if a else 0.0) * ((x2 + L) / (2.0 * L)) ** b

            def d2(x1, x2, a=a, b=b):
                return 0.0 * x2 + (x1 / T) ** a * (b * ((x2 + L) / (2.0 * L)) ** (b - 1) / (2.0 * L) if b else 0.0)

            battery.append(((a, b), phi, d1, d2))
    return battery


def continuity_residual(sf: SubsolutionFields, dom: Domain, u: ScalarField) -> float:
    """
    Largest weak-form residual of the continuity equation over the test battery:

        int int rho d_1 phi + m d_2 phi + int rho(0) phi(0) - int rho(T) phi(T).

    The traces rho(0), rho(T) are the x2 difference quotients of u on the
    first and last node rows.  With (rho, m) = (d_x2 u, -d_x1 u) the identity
    holds up to the quadrature error of the midpoint rule.
    """
    grid = sf.grid
    X1c, X2c = grid.cell_centers()
    w = grid.cell_area
    p1, rho, _ = cell_gradients(u)
    m = -p1
    hx = grid.hx
    x2c = grid.x2c
    trace_0 = np.diff(u.values[0]) / hx
    trace_T = np.diff(u.values[-1]) / hx
    worst = 0.0
    for _, phi, d1, d2 in continuity_test_functions(dom):
        bulk = w * np.sum(rho * d1(X1c, X2c) + m * d2(X1c, X2c))
        initial = hx * np.sum(trace_0 * phi(0.0, x2c))
        final = hx * np.sum(trace_T * phi(dom.T, x2c))
        worst = max(worst, abs(bulk + initial - final))
    return float(worst)


def energy_profile(sf: SubsolutionFields, dom: Domain) -> np.ndarray:
    """Per-layer int (n/2)(e0 + rho e1) + rho gA x2 dx2."""
    X2c = sf.grid.cell_centers()[1]
    return sf.grid.hx * np.sum(kinetic_density(sf) + sf.rho * dom.gA * X2c, axis=1)


def to_two_phase(sf: SubsolutionFields, dom: Domain, tol: float = DEGENERACY_TOL) -> TwoPhaseFlow:
    """
    mu_+ = (1 + rho)/(4L), mu_- = (1 - rho)/(4L), v_+ = m/(1 + rho), v_- = -m/(1 - rho).

    Raises:
        DegenerateCellError: a phase vanishes (1 +- rho <= tol) where m != 0
    """
    return two_phase_from_density(sf.grid, sf.rho, sf.m, dom, tol)


def two_phase_from_density(grid: Grid, rho: np.ndarray, m: np.ndarray, dom: Domain, tol: float = DEGENERACY_TOL) -> TwoPhaseFlow:
    if np.any(np.abs(rho) > 1.0 + tol):
        raise DomainError("two-phase fractions need |rho| <= 1")
    plus, minus = 1.0 + rho, 1.0 - rho
    vacuum = (m != 0.0) & ((plus <= tol) | (minus <= tol))
    if np.any(vacuum):
        cells = [tuple(int(k) for k in c) for c in np.argwhere(vacuum)]
        raise DegenerateCellError(f"{len(cells)} cells carry momentum into a vanishing phase", cells)
    L = dom.L
    v_plus = np.where(m != 0.0, m / np.where(plus > tol, plus, 1.0), 0.0)
    v_minus = np.where(m != 0.0, -m / np.where(minus > tol, minus, 1.0), 0.0)
    return TwoPhaseFlow(grid, plus / (4.0 * L), minus / (4.0 * L), v_plus, v_minus)


def from_two_phase(tp: TwoPhaseFlow, dom: Domain) -> Tuple[np.ndarray, np.ndarray]:
    """rho = 4L mu_+ - 1, m = 4L mu_+ v_+."""
    L = dom.L
    return 4.0 * L * tp.mu_plus - 1.0, 4.0 * L * tp.mu_plus * tp.v_plus


def two_phase_action(tp: TwoPhaseFlow, dom: Domain) -> float:
    """int int (1/2)(mu_+ v_+^2 + mu_- v_-^2) - gA (mu_+ - mu_-) x2."""
    X2c = tp.grid.cell_centers()[1]
    density = 0.5 * (tp.mu_plus * tp.v_plus ** 2 + tp.mu_minus * tp.v_minus ** 2) \
        - dom.gA * (tp.mu_plus - tp.mu_minus) * X2c
    return float(tp.grid.cell_area * density.sum())


def reduced_action(grid: Grid, rho: np.ndarray, m: np.ndarray, dom: Domain) -> float:
    """A0(rho, m) = int int m^2 / (2 (1 - rho^2)) - rho gA x2, with m = 0 cells contributing no kinetic part."""
    X2c = grid.cell_centers()[1]
    gap = np.where(m != 0.0, 1.0 - rho * rho, 1.0)
    density = np.where(m != 0.0, m * m / (2.0 * gap), 0.0) - rho * dom.gA * X2c
    return float(grid.cell_area * density.sum())
