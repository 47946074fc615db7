"""
Nonlinear potentials V(x2, z) of the action and the supremum s_V.

Every potential is vectorized in (x2, z) and carries its z-derivatives up to
third order.  When V is written as -gAz + f, the dissipation part f and its
z-derivative are attached as well.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar

from app.exceptions import DomainError
from app.grid import Domain
from app.services.cache_service import cached

logger = logging.getLogger(__name__)

Func = Callable[[np.ndarray, np.ndarray], np.ndarray]

SCAN_POINTS = 129


@dataclass(frozen=True)
class PotentialSpec:
    name: str
    base: Func
    dz_base: Func
    dz2_base: Func
    dz3_base: Func
    f: Optional[Func] = None
    dzf: Optional[Func] = None
    shift_constant: float = 0.0

    @property
    def has_f(self) -> bool:
        return self.f is not None

    def V(self, x2, z):
        return self.base(np.asarray(x2, dtype=float), np.asarray(z, dtype=float)) + self.shift_constant

    def dzV(self, x2, z):
        return self.dz_base(np.asarray(x2, dtype=float), np.asarray(z, dtype=float))

    def dz2V(self, x2, z):
        return self.dz2_base(np.asarray(x2, dtype=float), np.asarray(z, dtype=float))

    def dz3V(self, x2, z):
        return self.dz3_base(np.asarray(x2, dtype=float), np.asarray(z, dtype=float))

    def with_shift(self, shift: float) -> "PotentialSpec":
        return replace(self, shift_constant=float(shift))


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _smoothstep_slope(s):
    inside = (s > 0.0) & (s < 1.0)
    return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)


def _taper_first(s):
    """Integral of 1 - smoothstep from 0 to s."""
    sc = np.clip(s, 0.0, 1.0)
    inner = sc - (sc ** 6 - 3.0 * sc ** 5 + 2.5 * sc ** 4)
    return np.where(s <= 1.0, inner, 0.5)


def _taper_second(s):
    sc = np.clip(s, 0.0, 1.0)
    inner = sc * sc / 2.0 - (sc ** 7 / 7.0 - sc ** 6 / 2.0 + sc ** 5 / 2.0)
    return np.where(s <= 1.0, inner, 5.0 / 14.0 + 0.5 * (s - 1.0))


def _tapered_quadratic(c: float, band: float, center: Func):
    """
    c (z - center(x2))^2 on |z| <= band; beyond the band the curvature 2c is
    switched off smoothly over one unit of z, matching value, slope and
    curvature at the band edge.

    Returns:
        (f, dzf, dz2f, dz3f)
    """

    def pieces(x2, z):
        x2, z = np.broadcast_arrays(np.asarray(x2, float), np.asarray(z, float))
        ell = center(x2)
        up = z > band
        down = z < -band
        edge = np.where(down, -band, band)
        s = np.where(up, z - band, np.where(down, -band - z, 0.0))
        f_edge = c * (edge - ell) ** 2
        f1_edge = 2.0 * c * (edge - ell)
        direction = np.where(down, -1.0, 1.0)

        f = np.where(up | down, f_edge + direction * f1_edge * s + 2.0 * c * _taper_second(s), c * (z - ell) ** 2)
        f1 = np.where(up | down, f1_edge + direction * 2.0 * c * _taper_first(s), 2.0 * c * (z - ell))
        f2 = np.where(up | down, 2.0 * c * (1.0 - _smoothstep(s)), 2.0 * c)
        f3 = np.where(up | down, -direction * 2.0 * c * _smoothstep_slope(s), 0.0)
        return f, f1, f2, f3

    return (
        lambda x2, z: pieces(x2, z)[0],
        lambda x2, z: pieces(x2, z)[1],
        lambda x2, z: pieces(x2, z)[2],
        lambda x2, z: pieces(x2, z)[3],
    )


def example_potential(dom: Domain) -> PotentialSpec:
    """V = -gAz + (3gA/4L)(z - (|x2| - L))^2, curvature tapered outside |z| <= L + 1."""
    gA, L = dom.gA, dom.L
    f, f1, f2, f3 = _tapered_quadratic(3.0 * gA / (4.0 * L), L + 1.0, lambda x2: np.abs(x2) - L)
    return PotentialSpec(
        name="example",
        base=lambda x2, z: -gA * z + f(x2, z),
        dz_base=lambda x2, z: -gA + f1(x2, z),
        dz2_base=f2,
        dz3_base=f3,
        f=f,
        dzf=f1,
    )


def no_dissipation_potential(dom: Domain) -> PotentialSpec:
    gA = dom.gA
    zero = lambda x2, z: np.zeros(np.broadcast(x2, z).shape)  # noqa: E731
    return PotentialSpec(
        name="no_dissipation",
        base=lambda x2, z: -gA * np.broadcast_arrays(x2, z)[1],
        dz_base=lambda x2, z: np.full(np.broadcast(x2, z).shape, -gA),
        dz2_base=zero,
        dz3_base=zero,
        f=zero,
        dzf=zero,
    )


def concave_potential(dom: Domain) -> PotentialSpec:
    zero = lambda x2, z: np.zeros(np.broadcast(x2, z).shape)  # noqa: E731
    return PotentialSpec(
        name="concave",
        base=lambda x2, z: -np.broadcast_arrays(x2, z)[1] ** 2,
        dz_base=lambda x2, z: -2.0 * np.broadcast_arrays(x2, z)[1],
        dz2_base=lambda x2, z: np.full(np.broadcast(x2, z).shape, -2.0),
        dz3_base=zero,
    )


def cubic_potential(dom: Domain) -> PotentialSpec:
    return PotentialSpec(
        name="cubic",
        base=lambda x2, z: -np.broadcast_arrays(x2, z)[1] ** 3,
        dz_base=lambda x2, z: -3.0 * np.broadcast_arrays(x2, z)[1] ** 2,
        dz2_base=lambda x2, z: -6.0 * np.broadcast_arrays(x2, z)[1],
        dz3_base=lambda x2, z: np.full(np.broadcast(x2, z).shape, -6.0),
    )


def zero_potential(dom: Domain) -> PotentialSpec:
    zero = lambda x2, z: np.zeros(np.broadcast(x2, z).shape)  # noqa: E731
    return PotentialSpec(name="zero", base=zero, dz_base=zero, dz2_base=zero, dz3_base=zero)


POTENTIALS: Dict[str, Callable[[Domain], PotentialSpec]] = {
    "example": example_potential,
    "no_dissipation": no_dissipation_potential,
    "concave": concave_potential,
    "cubic": cubic_potential,
    "zero": zero_potential,
}


def compute_sV(ps: PotentialSpec, dom: Domain, nq: int = 128, scan_points: int = SCAN_POINTS) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Supremum of the integral of V(x2, phi) over profiles |phi| <= L - |x2|.

    The constraint and the integrand are pointwise in x2, so the supremum is
    the integral of the pointwise maxima.  Each maximum comes from a dense
    scan of the admissible interval refined with a bounded scalar search.

    Args:
        ps: potential
        dom: domain
        nq: number of trapezoid intervals in x2 (>= 64)
        scan_points: scan density per abscissa

    Returns:
        (s_V, {"x2": abscissae, "phi": argmax profile, "values": pointwise maxima})
    """
    if nq < 64:
        raise DomainError(f"compute_sV needs nq >= 64, got {nq}")
    L = dom.L
    x2 = np.linspace(-L, L, nq + 1)
    half = L - np.abs(x2)
    phi = np.zeros_like(x2)
    best = np.empty_like(x2)
    unit = np.linspace(-1.0, 1.0, scan_points)
    for k, (x, d) in enumerate(zip(x2, half)):
        if d <= 0.0:
            best[k] = float(ps.V(x, 0.0))
            continue
        zs = d * unit
        values = ps.V(np.full_like(zs, x), zs)
        j = int(np.argmax(values))
        phi[k], best[k] = zs[j], values[j]
        lo, hi = zs[max(j - 1, 0)], zs[min(j + 1, scan_points - 1)]
        refined = minimize_scalar(lambda z: -float(ps.V(x, z)), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12 * max(L, 1.0)})
        if -refined.fun > best[k]:
            phi[k], best[k] = float(refined.x), -float(refined.fun)
    value = float(trapezoid(best, x2))
    logger.debug(f"s_V for potential '{ps.name}': {value:.12g}")
    return value, {"x2": x2, "phi": phi, "values": best}


def profile_integral(ps: PotentialSpec, dom: Domain, sign: float, nq: int = 128) -> float:
    """Integral of V(x2, sign (L - |x2|)) by the same trapezoid rule as compute_sV."""
    x2 = np.linspace(-dom.L, dom.L, nq + 1)
    return float(trapezoid(ps.V(x2, sign * (dom.L - np.abs(x2))), x2))


def zero_sup_shift(ps: PotentialSpec, dom: Domain, nq: int = 128) -> float:
    """Constant making s_V vanish."""
    s_v, _ = compute_sV(ps.with_shift(0.0), dom, nq)
    return -s_v / (2.0 * dom.L)


@cached("auto_shift")
def auto_shift(name: str, dom: Domain, nq: int = 128) -> float:
    """zero_sup_shift of a built-in potential, memoized per (name, domain)."""
    return zero_sup_shift(POTENTIALS[name](dom), dom, nq)


def get_potential(name: str, dom: Domain, shift: Union[None, str, float] = None) -> PotentialSpec:
    """
    Build a named potential.

    Args:
        name: one of POTENTIALS
        dom: domain supplying g, A, L
        shift: None (no shift), "auto" (s_V -> 0) or an explicit constant
    """
    if name not in POTENTIALS:
        raise DomainError(f"Unknown potential '{name}', expected one of {sorted(POTENTIALS)}")
    ps = POTENTIALS[name](dom)
    if shift is None:
        return ps
    if shift == "auto":
        shift = auto_shift(name, dom)
        logger.info(f"Potential '{name}' shifted by {shift:.12g} so that s_V = 0")
    return ps.with_shift(float(shift))
