"""
Discretization of the space-time rectangle (0,T) x (-L,L).

Nodal values live on a uniform tensor grid, gradients live at cell centers
(bilinear interpolation of the four surrounding nodes) and every nonlinear
integrand is evaluated with the one-point midpoint rule.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Tuple, Union

import numpy as np

from app.exceptions import DomainError, EvaluationError, GridIndexError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# relative slack when checking |x2| <= L
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Physical parameters of the problem (all nondimensional)."""

    T: float = 1.0
    L: float = 1.0
    n: int = 2
    g: float = 1.0
    A: float = 1.0

    def __post_init__(self):
        errors = []
        if not self.T > 0:
            errors.append(f"T must be positive, got {self.T}")
        if not self.L > 0:
            errors.append(f"L must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 2:
            errors.append(f"n must be an integer >= 2, got {self.n}")
        if not self.g > 0:
            errors.append(f"g must be positive, got {self.g}")
        if not self.A > 0:
            errors.append(f"A must be positive, got {self.A}")
        if errors:
            raise DomainError(f"Invalid domain: {', '.join(errors)}")

    @property
    def gA(self) -> float:
        return self.g * self.A


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid with Nt time intervals and Nx space intervals."""

    domain: Domain
    Nt: int
    Nx: int

    def __post_init__(self):
        errors = []
        if int(self.Nt) != self.Nt or self.Nt < 2:
            errors.append(f"Nt must be an integer >= 2, got {self.Nt}")
        if int(self.Nx) != self.Nx or self.Nx < 2:
            errors.append(f"Nx must be an integer >= 2, got {self.Nx}")
        elif self.Nx % 2:
            errors.append(f"Nx must be even so that x2 = 0 is a grid line, got {self.Nx}")
        if errors:
            raise DomainError(f"Invalid grid: {', '.join(errors)}")

    @property
    def ht(self) -> float:
        return self.domain.T / self.Nt

    @property
    def hx(self) -> float:
        return 2.0 * self.domain.L / self.Nx

    @property
    def cell_area(self) -> float:
        return self.ht * self.hx

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.Nt + 1, self.Nx + 1)

    @property
    def x1(self) -> np.ndarray:
        return np.arange(self.Nt + 1) * self.ht

    @property
    def x2(self) -> np.ndarray:
        return -self.domain.L + np.arange(self.Nx + 1) * self.hx

    @property
    def x1c(self) -> np.ndarray:
        return (np.arange(self.Nt) + 0.5) * self.ht

    @property
    def x2c(self) -> np.ndarray:
        return -self.domain.L + (np.arange(self.Nx) + 0.5) * self.hx

    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x1c, self.x2c, indexing="ij")

    @property
    def n_interior(self) -> int:
        return (self.Nt - 1) * (self.Nx - 1)

    def interior(self, values: np.ndarray) -> np.ndarray:
        """Row-major vector of interior nodal values."""
        return np.ascontiguousarray(values[1:-1, 1:-1]).ravel()

    def with_interior(self, values: np.ndarray, vector: np.ndarray) -> np.ndarray:
        out = np.array(values, dtype=float, copy=True)
        out[1:-1, 1:-1] = np.asarray(vector, dtype=float).reshape(self.Nt - 1, self.Nx - 1)
        return out

    def refined(self) -> "Grid":
        return Grid(self.domain, 2 * self.Nt, 2 * self.Nx)


@dataclass(frozen=True)
class ScalarField:
    """Immutable nodal field; node (i, j) sits at (i*ht, -L + j*hx)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.shape != self.grid.shape:
            raise DomainError(
                f"Field shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ScalarField":
        X1, X2 = grid.node_coordinates()
        return cls(grid, np.broadcast_to(func(X1, X2), grid.shape))

    def replace(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def boundary_profile(x2: ArrayLike, eps: float, beta: float, dom: Domain) -> ArrayLike:
    """
    Perturbed interface cone U_eps(x2) = L - |x2| + eps^beta/(2L) (L^2 - x2^2).

    Args:
        x2: height(s) with |x2| <= L
        eps: regularization parameter, eps = 0 gives L - |x2|
        beta: exponent of the boundary perturbation
        dom: physical domain

    Returns:
        U_eps evaluated at x2 (scalar in, scalar out)
    """
    x = np.asarray(x2, dtype=float)
    L = dom.L
    if np.any(np.abs(x) > L * (1.0 + _EDGE_TOL)):
        raise DomainError(f"boundary_profile needs |x2| <= L = {L}")
    x = np.clip(x, -L, L)
    value = L - np.abs(x)
    if eps > 0:
        value = value + eps ** beta / (2.0 * L) * (L * L - x * x)
    if np.ndim(value) == 0:
        return float(value)
    return value


def boundary_profile_derivative(x2: ArrayLike, eps: float, beta: float, dom: Domain) -> ArrayLike:
    """U_eps'(x2) away from the kink at 0."""
    x = np.asarray(x2, dtype=float)
    slope = -np.sign(x)
    if eps > 0:
        slope = slope - eps ** beta / dom.L * x
    return slope


def impose_boundary(u: ScalarField, eps: float, dom: Domain, beta: float = 1.25) -> ScalarField:
    """Set the traces of X_eps: -U_eps at x1 = 0, U_eps at x1 = T, zero at x2 = +-L."""
    grid = u.grid
    values = np.array(u.values, copy=True)
    profile = boundary_profile(grid.x2, eps, beta, dom)
    values[:, 0] = 0.0
    values[:, -1] = 0.0
    values[0, :] = -profile
    values[-1, :] = profile
    return ScalarField(grid, values)


def linear_interpolant(grid: Grid, eps: float, beta: float = 1.25) -> ScalarField:
    """Nodal samples of (2 x1/T - 1) U_eps(x2), the affine-in-time interpolant of the traces."""
    dom = grid.domain
    X1, X2 = grid.node_coordinates()
    values = (2.0 * X1 / dom.T - 1.0) * boundary_profile(X2, eps, beta, dom)
    return ScalarField(grid, values)


def cell_gradients(u: ScalarField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradient and value at every cell center.

    Returns:
        (p1, p2, uc) arrays of shape (Nt, Nx)
    """
    grid = u.grid
    v = u.values
    a, b = v[:-1, :-1], v[1:, :-1]
    c, d = v[:-1, 1:], v[1:, 1:]
    p1 = (b + d - a - c) / (2.0 * grid.ht)
    p2 = (c + d - a - b) / (2.0 * grid.hx)
    uc = 0.25 * (a + b + c + d)
    return p1, p2, uc


def cell_gradient(u: ScalarField, cell: Tuple[int, int]) -> np.ndarray:
    """Gradient (d/dx1, d/dx2) at the center of one cell."""
    grid = u.grid
    i, j = cell
    if not (0 <= i < grid.Nt and 0 <= j < grid.Nx):
        raise GridIndexError(f"Cell {cell} outside grid with {grid.Nt} x {grid.Nx} cells")
    v = u.values
    a, b, c, d = v[i, j], v[i + 1, j], v[i, j + 1], v[i + 1, j + 1]
    return np.array([(b + d - a - c) / (2.0 * grid.ht), (c + d - a - b) / (2.0 * grid.hx)])


def quadrature(u: ScalarField, integrand: Callable) -> float:
    """
    Midpoint rule over all cells.

    Args:
        u: nodal field
        integrand: vectorized callable (x1c, x2c, p1, p2, uc) -> array of cell values

    Returns:
        sum over cells of ht * hx * integrand
    """
    grid = u.grid
    X1c, X2c = grid.cell_centers()
    p1, p2, uc = cell_gradients(u)
    values = np.broadcast_to(np.asarray(integrand(X1c, X2c, p1, p2, uc), dtype=float), p1.shape)
    bad = ~np.isfinite(values)
    if np.any(bad):
        cell = tuple(int(k) for k in np.argwhere(bad)[0])
        raise EvaluationError(f"Non-finite integrand value at cell {cell}", cell=cell)
    return float(grid.cell_area * values.sum())
