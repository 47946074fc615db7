"""
Kinetic integrand of the action and its regularizations.

F(p) = p1^2 / (2 (1 - p2^2)) is degenerate (no ellipticity at p1 = 0, infinite
where |p2| >= 1).  F_eps replaces the strip |p2| < 1 by |p2| < 1 + eps and adds
eps^theta to the numerator; ``FastExtension`` continues F_eps from the safe box
K^eps to the whole plane as a convex, C^1 function with closed-form derivatives
and is what the solver evaluates.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from app.exceptions import DomainError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

LAMBDA_0 = 1.0 / 128.0
P1_CAP = 1e8
# eps^(4 theta) drops below double precision relative to 1 + eps for small eps
P2_MARGIN_FLOOR = 1e-10


@dataclass(frozen=True)
class RegularizationParams:
    eps: float
    theta: float = 1.5
    beta: float = 1.25

    def __post_init__(self):
        errors = []
        if not 0.0 < self.eps < 1.0:
            errors.append(f"eps must lie in (0,1), got {self.eps}")
        if not 1.0 < self.theta < 2.0:
            errors.append(f"theta must lie in (1,2), got {self.theta}")
        if not 1.0 < self.beta < 3.0 - self.theta:
            errors.append(f"beta must lie in (1, 3 - theta), got {self.beta}")
        if errors:
            raise DomainError(f"Invalid regularization: {', '.join(errors)}")

    @property
    def eps_theta(self) -> float:
        return self.eps ** self.theta

    @property
    def a2(self) -> float:
        """Squared half-width (1 + eps)^2 of the widened strip."""
        return (1.0 + self.eps) ** 2


@dataclass(frozen=True)
class SafeBox:
    """K^eps = {|p1| <= p1_max, |p2| <= p2_max}, optionally shrunk towards the origin."""

    p1_max: float
    p2_max: float

    @classmethod
    def for_params(cls, rp: RegularizationParams, shrink: float = 1.0) -> "SafeBox":
        p1_max = min(rp.eps ** (-4.0 * rp.theta), P1_CAP)
        p2_max = 1.0 + rp.eps - max(rp.eps ** (4.0 * rp.theta), P2_MARGIN_FLOOR)
        return cls(shrink * p1_max, shrink * p2_max)

    def contains(self, p1: ArrayLike, p2: ArrayLike) -> np.ndarray:
        return (np.abs(p1) <= self.p1_max) & (np.abs(p2) <= self.p2_max)


def F(p1: ArrayLike, p2: ArrayLike) -> ArrayLike:
    """Degenerate kinetic integrand; returns np.inf where p1 != 0 and |p2| >= 1."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(
            p1 == 0.0,
            0.0,
            np.where(np.abs(p2) >= 1.0, np.inf, p1 * p1 / (2.0 * (1.0 - p2 * p2))),
        )
    if value.ndim == 0:
        return float(value)
    return value


def _strip_gap(p2: np.ndarray, rp: RegularizationParams) -> np.ndarray:
    sigma = rp.a2 - p2 * p2
    if np.any(sigma <= 0.0):
        raise DomainError(
            f"F_eps is only defined for |p2| < 1 + eps = {1.0 + rp.eps}; "
            "route such gradients through the extension"
        )
    return sigma


def F_eps(p1: ArrayLike, p2: ArrayLike, rp: RegularizationParams) -> ArrayLike:
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    sigma = _strip_gap(p2, rp)
    value = (p1 * p1 + rp.eps_theta) / (2.0 * sigma)
    return float(value) if value.ndim == 0 else value


def grad_F_eps(p1: ArrayLike, p2: ArrayLike, rp: RegularizationParams) -> np.ndarray:
    """Gradient with the component axis last."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    sigma = _strip_gap(p2, rp)
    num = p1 * p1 + rp.eps_theta
    return np.stack([p1 / sigma, num * p2 / sigma ** 2], axis=-1)


def hess_F_eps(p1: ArrayLike, p2: ArrayLike, rp: RegularizationParams) -> np.ndarray:
    """Hessian with the two component axes last."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    sigma = _strip_gap(p2, rp)
    num = p1 * p1 + rp.eps_theta
    h11 = 1.0 / sigma
    h12 = 2.0 * p1 * p2 / sigma ** 2
    h22 = num * (rp.a2 + 3.0 * p2 * p2) / sigma ** 3
    return np.stack([np.stack([h11, h12], axis=-1), np.stack([h12, h22], axis=-1)], axis=-2)


def det_hess_F_eps(p1: ArrayLike, p2: ArrayLike, rp: RegularizationParams) -> ArrayLike:
    """Closed-form determinant p1^2/s^3 + eps^theta (a2 + 3 p2^2)/s^4 with s = a2 - p2^2."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    sigma = _strip_gap(p2, rp)
    return p1 * p1 / sigma ** 3 + rp.eps_theta * (rp.a2 + 3.0 * p2 * p2) / sigma ** 4


class FastExtension:
    """
    Convex C^1 extension of F_eps from the safe box to the plane.

    Writing rho = sqrt(p1^2 + eps^theta) and s = (1+eps)^2 - p2^2, F_eps is
    rho^2 / (2 s).  The extension caps the ratio rho / s at R:

        psi(rho, s) = rho^2 / (2 s)        if rho <= R s
                    = R rho - s R^2 / 2     otherwise

    psi is convex, nondecreasing in rho and nonincreasing in s, rho is convex
    in p1 and s is concave in p2, so the composition is convex.  R is the
    largest ratio attained on the safe box, hence the extension coincides
    with F_eps there.
    """

    def __init__(self, rp: RegularizationParams, shrink: float = 1.0):
        self.rp = rp
        self.box = SafeBox.for_params(rp, shrink)
        gap = rp.a2 - self.box.p2_max ** 2
        self.R = np.sqrt(self.box.p1_max ** 2 + rp.eps_theta) / gap

    def evaluate(self, p1: ArrayLike, p2: ArrayLike):
        """
        Value and derivatives at every point.

        Returns:
            (value, g1, g2, h11, h12, h22) arrays broadcast to the input shape
        """
        rp = self.rp
        R = self.R
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        rho2 = p1 * p1 + rp.eps_theta
        rho = np.sqrt(rho2)
        sigma = rp.a2 - p2 * p2
        inner = (sigma > 0.0) & (rho <= R * sigma)
        s = np.where(inner, sigma, 1.0)

        value = np.where(inner, rho2 / (2.0 * s), R * rho - sigma * R * R / 2.0)
        g1 = np.where(inner, p1 / s, R * p1 / rho)
        g2 = np.where(inner, rho2 * p2 / s ** 2, R * R * p2)
        h11 = np.where(inner, 1.0 / s, R * rp.eps_theta / rho ** 3)
        h12 = np.where(inner, 2.0 * p1 * p2 / s ** 2, 0.0)
        h22 = np.where(inner, rho2 * (rp.a2 + 3.0 * p2 * p2) / s ** 3, R * R)
        return value, g1, g2, h11, h12, h22

    def value(self, p1: ArrayLike, p2: ArrayLike) -> np.ndarray:
        return self.evaluate(p1, p2)[0]


class QuadraticIntegrand:
    """|p|^2 / 2, a translation-invariant toy used to test the solver."""

    def evaluate(self, p1: ArrayLike, p2: ArrayLike):
        p1 = np.asarray(p1, dtype=float)
        p2 = np.asarray(p2, dtype=float)
        ones = np.ones(np.broadcast(p1, p2).shape)
        return 0.5 * (p1 * p1 + p2 * p2), p1 * ones, p2 * ones, ones, 0.0 * ones, ones

    def value(self, p1: ArrayLike, p2: ArrayLike) -> np.ndarray:
        return self.evaluate(p1, p2)[0]


class DegenerateIntegrand:
    """The unregularized F; value only (derivatives do not exist everywhere)."""

    def value(self, p1: ArrayLike, p2: ArrayLike) -> np.ndarray:
        return np.asarray(F(p1, p2), dtype=float)

    def evaluate(self, p1: ArrayLike, p2: ArrayLike):
        raise DomainError("The degenerate integrand has no derivatives to assemble")


def F_hat_fast(p1: ArrayLike, p2: ArrayLike, rp: RegularizationParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fast extension as (value, gradient, hessian) with component axes last.

    Equal to (F_eps, grad_F_eps, hess_F_eps) on the safe box.
    """
    value, g1, g2, h11, h12, h22 = FastExtension(rp).evaluate(p1, p2)
    gradient = np.stack([g1, g2], axis=-1)
    hessian = np.stack([np.stack([h11, h12], axis=-1), np.stack([h12, h22], axis=-1)], axis=-2)
    return value, gradient, hessian


def integrand_for(eps: float, theta: float = 1.5, beta: float = 1.25, shrink: float = 1.0):
    """Integrand strategy used by the action at a given eps (eps = 0 is the degenerate F)."""
    if eps == 0:
        return DegenerateIntegrand()
    return FastExtension(RegularizationParams(eps, theta, beta), shrink)
