"""
Diagnostics on solved fields: time-slice energies, the first integral, the
dissipation balance, mixing-zone geometry, attainment of the boundary traces,
the oscillation modulus and the long-time kinetic bound.

Row quantities built from gradients use the cell layer (i, i+1); the last
node row reuses the last layer.

The first and last few layers sit in the boundary layer at the fixed traces,
which the grid does not resolve; their Legendre energy carries an offset that
does not shrink under refinement.  Conservation checks therefore run on the
layers inside ``boundary_band`` of each end.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid

from app.exceptions import DomainError, PreconditionError
from app.grid import ScalarField, boundary_profile, cell_gradients
from app.integrand import DegenerateIntegrand, FastExtension, RegularizationParams, integrand_for
from app.potential import PotentialSpec
from app.services.solver_service import SolveReport, initial_guess_bound
from app.utils.logger import log_check

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)
EIGHT_CONNECTED = ndimage.generate_binary_structure(2, 2)
# trace potentials are integrated on the node row interpolated to this many points per cell
TRACE_REFINEMENT = 32


@dataclass
class EnergyTrace:
    x1: np.ndarray
    E_kin: np.ndarray
    E_pot: np.ndarray
    E_f: np.ndarray
    H: np.ndarray
    D: np.ndarray
    layer_E_kin: np.ndarray
    layer_E_pot: np.ndarray
    layer_E_f: np.ndarray
    layer_H: np.ndarray
    layer_D: np.ndarray
    layer_E_leg: np.ndarray
    ht: float
    has_f: bool = True
    # int V(x2, u) over the first and last node rows
    V_start: float = 0.0
    V_end: float = 0.0

    def rows(self):
        for i in range(len(self.x1)):
            yield i, self.x1[i], self.E_kin[i], self.E_pot[i], self.E_f[i], self.H[i], self.D[i]

    @property
    def band(self) -> int:
        return boundary_band(len(self.layer_H))

    def interior(self, layer: np.ndarray) -> np.ndarray:
        """Layers left after dropping ``band`` layers at each end."""
        return layer[self.band:len(layer) - self.band]

    @property
    def mean_H(self) -> float:
        H = self.interior(self.layer_H)
        return float(H.mean()) if H.size else float(self.layer_H.mean())


@dataclass
class MixingZone:
    mask: np.ndarray
    labels: np.ndarray
    components: List[Dict] = field(default_factory=list)
    tau: float = 0.0

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def holes(self) -> List[int]:
        return [c["holes"] for c in self.components]


def _to_rows(layer: np.ndarray) -> np.ndarray:
    return np.append(layer, layer[-1])


def boundary_band(n_layers: int) -> int:
    """Layers excluded at each end of the trace: an eighth of them, at least one."""
    return max(1, n_layers // 8)


def energy_trace(u: ScalarField, eps: float, ps: PotentialSpec, theta: float = 1.5, beta: float = 1.25,
                 shrink: float = 1.0, integrand=None) -> EnergyTrace:
    """
    Per-row energies of a field.

    E_kin = int F_hat(grad u) dx2, E_pot = int -gA u dx2, E_f = int f(x2, u) dx2,
    H = int d_p1 F_hat p1 - F_hat + V(x2, u) dx2 and D = -int d_z f(x2, u) d_x1 u dx2.
    E_leg = int d_p1 F_hat p1 - F_hat - gA u dx2 is H without f and the potential shift;
    along a minimizer d/dx1 E_leg = D.  V_start and V_end integrate V along the
    first and last node rows.
    At eps = 0 d_p1 F p1 = 2F, so H = E_kin + int V and E_leg = E_kin + E_pot.

    Args:
        theta, beta, shrink: the regularization the field was solved with
        integrand: overrides the integrand built from eps, theta, beta and shrink
    """
    grid = u.grid
    dom = grid.domain
    if integrand is None:
        integrand = integrand_for(eps, theta, beta, shrink)
    p1, p2, uc = cell_gradients(u)
    _, X2c = grid.cell_centers()
    hx = grid.hx

    if isinstance(integrand, DegenerateIntegrand):
        kinetic = integrand.value(p1, p2)
        legendre = kinetic
    else:
        kinetic, g1, _, _, _, _ = integrand.evaluate(p1, p2)
        legendre = g1 * p1 - kinetic
    potential = ps.V(X2c, uc)
    layer_E_kin = hx * kinetic.sum(axis=1)
    layer_H = hx * (legendre + potential).sum(axis=1)
    layer_E_pot = hx * (-dom.gA * uc).sum(axis=1)
    if ps.has_f:
        layer_E_f = hx * ps.f(X2c, uc).sum(axis=1)
        layer_D = -hx * (ps.dzf(X2c, uc) * p1).sum(axis=1)
        E_f = trapezoid(ps.f(*np.broadcast_arrays(grid.x2[None, :], u.values)), dx=hx, axis=1)
    else:
        layer_E_f = np.zeros(grid.Nt)
        layer_D = np.zeros(grid.Nt)
        E_f = np.zeros(grid.Nt + 1)
    E_pot = trapezoid(-dom.gA * u.values, dx=hx, axis=1)
    layer_E_leg = hx * (legendre - dom.gA * uc).sum(axis=1)
    fine = np.linspace(-dom.L, dom.L, TRACE_REFINEMENT * grid.Nx + 1)
    V_ends = [trapezoid(ps.V(fine, np.interp(fine, grid.x2, row)), fine) for row in u.values[[0, -1]]]

    return EnergyTrace(
        x1=grid.x1,
        E_kin=_to_rows(layer_E_kin),
        E_pot=E_pot,
        E_f=E_f,
        H=_to_rows(layer_H),
        D=_to_rows(layer_D),
        layer_E_kin=layer_E_kin,
        layer_E_pot=layer_E_pot,
        layer_E_f=layer_E_f,
        layer_H=layer_H,
        layer_D=layer_D,
        layer_E_leg=layer_E_leg,
        ht=grid.ht,
        has_f=ps.has_f,
        V_start=float(V_ends[0]),
        V_end=float(V_ends[1]),
    )


def first_integral_deviation(trace: EnergyTrace) -> float:
    """max |H - mean H| over the layers inside the boundary band."""
    H = trace.interior(trace.layer_H)
    if H.size == 0:
        return 0.0
    return float(np.max(np.abs(H - H.mean())))


@log_check
def dissipation_check(trace: EnergyTrace, ps: PotentialSpec, tol: float = 1e-3, mismatch_tol: float = 1e-2):
    """
    Discrete d/dx1 E_leg between consecutive layers inside the boundary band
    against the dissipation rate averaged over the same layers.

    With V_dis the derivative must be <= tol; without f it must vanish up to tol.
    Rows in the messages are layer indices of the full trace.
    """
    band = trace.band
    energy = trace.interior(trace.layer_E_leg)
    derivative = np.diff(energy) / trace.ht
    D = trace.interior(trace.layer_D)
    rate = 0.5 * (D[1:] + D[:-1])
    mismatch = np.abs(derivative - rate)
    scale = max(1.0, float(np.max(np.abs(energy)))) if energy.size else 1.0
    errors = []
    max_derivative = float(derivative.max()) if derivative.size else 0.0
    max_mismatch = float(mismatch.max()) if mismatch.size else 0.0
    if not ps.has_f or not np.any(D):
        worst = float(np.max(np.abs(derivative))) if derivative.size else 0.0
        if worst > tol:
            errors.append(f"energy not conserved: |dE/dx1| = {worst:.3e} > {tol:g}")
    elif max_derivative > tol:
        row = int(np.argmax(derivative)) + band + 1
        errors.append(f"energy increases at row {row}: dE/dx1 = {max_derivative:.3e} > {tol:g}")
    if ps.has_f and max_mismatch > mismatch_tol * scale:
        row = int(np.argmax(mismatch)) + band + 1
        errors.append(f"dissipation mismatch {max_mismatch:.3e} at row {row} exceeds {mismatch_tol:g} x {scale:.3g}")
    return {
        "is_valid": not errors,
        "errors": errors,
        "band": band,
        "energy": energy,
        "derivative": derivative,
        "rate": rate,
        "max_derivative": max_derivative,
        "max_mismatch": max_mismatch,
        "row_scale": scale,
    }


def mixing_zone(u: ScalarField, tau: float) -> MixingZone:
    """
    Cells with d_x1 u > tau and |d_x2 u| < 1 - tau, their 4-connected
    components and the number of holes of each component.

    Holes are the 8-connected components of the complement inside the padded
    bounding box that do not reach its border.
    """
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    p1, p2, _ = cell_gradients(u)
    mask = (p1 > tau) & (np.abs(p2) < 1.0 - tau)
    labels, count = ndimage.label(mask, structure=FOUR_CONNECTED)
    components = []
    for label, box in enumerate(ndimage.find_objects(labels), start=1):
        if box is None:
            continue
        piece = np.pad(labels[box] == label, 1, constant_values=False)
        _, pieces = ndimage.label(~piece, structure=EIGHT_CONNECTED)
        components.append({
            "label": label,
            "size": int(np.count_nonzero(labels == label)),
            "holes": int(pieces - 1),
            "bbox": tuple((s.start, s.stop) for s in box),
        })
    logger.debug(f"Mixing zone with tau={tau:g}: {int(mask.sum())} cells, {count} components")
    return MixingZone(mask=mask, labels=labels, components=components, tau=tau)


def _dyadic(upper: float, lower: float) -> List[float]:
    values = []
    v = upper
    while v >= lower * (1.0 - 1e-12):
        values.append(v)
        v /= 2.0
    return values


def _non_increasing(values: Sequence[float], slack: float) -> bool:
    """True when values do not grow as the scale parameter decreases."""
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def trace_attainment(u: ScalarField, a_values: Optional[Sequence[float]] = None,
                     b_values: Optional[Sequence[float]] = None, slack: float = 1e-4) -> Dict:
    """
    Decay of the boundary-layer quantities.

    A1(a) = (1/a) int_{x1 < aT} |d_x2 u - sign x2|, C1(a) = (1/a) int_{x1 < aT} |d_x1 u|,
    B1(b) = (1/b) int_{x2 < -L + b} |d_x1 u|, with the bound B1(b) <= 2b + 2hx.

    Args:
        u: field with imposed boundary data
        a_values: decreasing time scales (defaults to dyadic values down to one layer)
        b_values: decreasing heights (defaults to dyadic values in [hx, L/2])
    """
    grid = u.grid
    dom = grid.domain
    p1, p2, _ = cell_gradients(u)
    X1c, X2c = grid.cell_centers()
    w = grid.cell_area
    if a_values is None:
        a_values = _dyadic(0.5, grid.ht / dom.T)
    if b_values is None:
        b_values = _dyadic(dom.L / 2.0, grid.hx)

    A1, C1, B1, bounds = [], [], [], []
    for a in a_values:
        near = X1c < a * dom.T
        A1.append(float(w * np.sum(np.abs(p2 - np.sign(X2c))[near]) / a))
        C1.append(float(w * np.sum(np.abs(p1)[near]) / a))
    for b in b_values:
        near = X2c < -dom.L + b
        B1.append(float(w * np.sum(np.abs(p1)[near]) / b))
        bounds.append(2.0 * b + 2.0 * grid.hx)
    errors = [
        f"B1({b:g}) = {value:.6g} exceeds {bound:.6g}"
        for b, value, bound in zip(b_values, B1, bounds) if value > bound
    ]
    return {
        "is_valid": not errors,
        "errors": errors,
        "a": list(a_values),
        "b": list(b_values),
        "A1": A1,
        "B1": B1,
        "C1": C1,
        "B1_bound": bounds,
        "A1_monotone": _non_increasing(A1, slack),
        "C1_monotone": _non_increasing(C1, slack),
    }


def oscillation_modulus(u: ScalarField, centers: Sequence[Tuple[float, float]],
                        radii: Sequence[float], tol: float = 1e-6) -> Dict:
    """
    Oscillation of u over nodal balls B_r(center) relative to
    ||grad u||_2 / sqrt(|log r|).  Pairs whose ball B_sqrt(r) leaves the
    domain are skipped with a note.
    """
    grid = u.grid
    dom = grid.domain
    p1, p2, _ = cell_gradients(u)
    notes = []
    if p1.min() < -tol:
        notes.append(f"d_x1 u reaches {p1.min():.3e}; monotonicity hypothesis violated")
    grad_norm = float(np.sqrt(grid.cell_area * np.sum(p1 * p1 + p2 * p2)))
    X1, X2 = grid.node_coordinates()
    rows = []
    for cx1, cx2 in centers:
        room = min(cx1, dom.T - cx1, cx2 + dom.L, dom.L - cx2)
        for r in radii:
            if not 0.0 < r < 1.0 or np.sqrt(r) > room:
                notes.append(f"skipped center ({cx1:g}, {cx2:g}) with r={r:g}: B_sqrt(r) leaves the domain")
                continue
            inside = (X1 - cx1) ** 2 + (X2 - cx2) ** 2 <= r * r
            values = u.values[inside]
            osc = float(values.max() - values.min()) if values.size else 0.0
            scale = grad_norm / np.sqrt(abs(np.log(r)))
            ratio = osc / scale if scale > 0 else 0.0
            rows.append({"center": (cx1, cx2), "r": r, "oscillation": osc, "ratio": ratio, "nodes": int(values.size)})
    return {
        "rows": rows,
        "max_ratio": max((row["ratio"] for row in rows), default=0.0),
        "grad_norm": grad_norm,
        "notes": notes,
    }


@dataclass
class KineticRun:
    """Converged run at one final time T."""

    T: float
    action: float
    trace: EnergyTrace


@log_check
def kinetic_jump_vs_T(runs: Sequence[KineticRun], tol: float = 1e-2) -> Dict:
    """
    Kinetic jumps at both traces against A_1(u_1) / T.

    The jump at a trace is the interior mean of H minus int V(x2, u) along
    that trace; the raw first- and last-layer kinetic energies are reported
    alongside.

    Raises:
        PreconditionError: no run at T = 1
    """
    reference = [run for run in runs if abs(run.T - 1.0) <= 1e-12]
    if not reference:
        raise PreconditionError("kinetic_jump_vs_T needs a run at T = 1")
    action_1 = reference[0].action
    rows, errors = [], []
    for run in sorted(runs, key=lambda r: r.T):
        trace = run.trace
        start = trace.mean_H - trace.V_start
        end = trace.mean_H - trace.V_end
        bound = action_1 / run.T
        ok_bound = start <= bound + tol
        ok_symmetry = abs(start - end) <= tol
        if not ok_bound:
            errors.append(f"T={run.T:g}: kinetic jump {start:.6g} exceeds {bound:.6g}")
        if not ok_symmetry:
            errors.append(f"T={run.T:g}: start {start:.6g} and end {end:.6g} kinetic estimates differ")
        rows.append({
            "T": run.T,
            "c_start": start,
            "c_end": end,
            "layer_start": float(trace.layer_E_kin[0]),
            "layer_end": float(trace.layer_E_kin[-1]),
            "bound": bound,
            "action": run.action,
            "passes": ok_bound and ok_symmetry,
        })
    return {"is_valid": not errors, "errors": errors, "rows": rows}


def row_extremes(u: ScalarField, eps: float, beta: float = 1.25) -> Dict:
    """Maximum-principle excess max(|u| - U_eps), min cell d_x1 u and max cell |d_x2 u|."""
    grid = u.grid
    _, X2 = grid.node_coordinates()
    excess = float(np.max(np.abs(u.values) - boundary_profile(X2, eps, beta, grid.domain)))
    p1, p2, _ = cell_gradients(u)
    return {
        "max_principle_excess": excess,
        "min_dx1": float(p1.min()),
        "max_abs_dx2": float(np.abs(p2).max()),
    }


def one_sided_min_principle(u: ScalarField, rectangles: Optional[Sequence[Tuple[int, int, int, int]]] = None,
                            tol: float = 1e-6) -> Dict:
    """
    Minimum of d_x1 u inside nested cell rectangles against the minimum on
    their boundary rings.

    Args:
        rectangles: (i0, i1, j0, j1) half-open cell ranges, at least 3 x 3;
            defaults to boxes shrinking by an eighth of the grid per step
    """
    grid = u.grid
    p1, _, _ = cell_gradients(u)
    if rectangles is None:
        rectangles = []
        for k in range(1, 4):
            di, dj = k * grid.Nt // 8, k * grid.Nx // 8
            if grid.Nt - 2 * di >= 3 and grid.Nx - 2 * dj >= 3:
                rectangles.append((di, grid.Nt - di, dj, grid.Nx - dj))
    rows, errors = [], []
    for i0, i1, j0, j1 in rectangles:
        if i1 - i0 < 3 or j1 - j0 < 3:
            raise DomainError(f"Rectangle {(i0, i1, j0, j1)} is thinner than 3 cells")
        block = p1[i0:i1, j0:j1]
        inner = block[1:-1, 1:-1].min()
        ring = np.concatenate([block[0], block[-1], block[1:-1, 0], block[1:-1, -1]]).min()
        excess = float(inner - ring)
        if excess < -tol:
            errors.append(f"rectangle {(i0, i1, j0, j1)}: interior minimum {inner:.6g} below ring minimum {ring:.6g}")
        rows.append({"rectangle": (i0, i1, j0, j1), "interior_min": float(inner),
                     "ring_min": float(ring), "excess": excess})
    return {"is_valid": not errors, "errors": errors, "rows": rows}


def barrier_check(rp: RegularizationParams, ps: PotentialSpec, grid,
                  shifts: Optional[Sequence[float]] = None, shrink: float = 1.0) -> Dict:
    """
    Strict barrier inequalities for +-U_eps at x2 != 0:

        D^2F_hat(grad U):D^2U + d_zV(x2, U + c) < 0,
        D^2F_hat(-grad U):(-D^2U) + d_zV(x2, -U + c) > 0.

    Args:
        shifts: sampled constants c (defaults to 9 values in [-2L, 2L])
        shrink: safe-box shrink of the extension the field was solved with
    """
    eps = rp.eps
    dom = grid.domain
    if shifts is None:
        shifts = np.linspace(-2.0 * dom.L, 2.0 * dom.L, 9)
    x2 = grid.x2[np.abs(grid.x2) > 0.5 * grid.hx]
    U = boundary_profile(x2, eps, rp.beta, dom)
    slope = -np.sign(x2) - eps ** rp.beta / dom.L * x2
    curvature = -eps ** rp.beta / dom.L
    extension = FastExtension(rp, shrink)
    _, _, _, _, _, h22_up = extension.evaluate(np.zeros_like(x2), slope)
    _, _, _, _, _, h22_down = extension.evaluate(np.zeros_like(x2), -slope)

    upper = np.array([h22_up * curvature + ps.dzV(x2, U + c) for c in shifts])
    lower = np.array([-h22_down * curvature + ps.dzV(x2, -U + c) for c in shifts])
    k_up = np.unravel_index(np.argmax(upper), upper.shape)
    k_low = np.unravel_index(np.argmin(lower), lower.shape)
    errors = []
    if upper[k_up] >= 0:
        errors.append(f"+U_eps is not a strict supersolution at x2={x2[k_up[1]]:g}, c={shifts[k_up[0]]:g}")
    if lower[k_low] <= 0:
        errors.append(f"-U_eps is not a strict subsolution at x2={x2[k_low[1]]:g}, c={shifts[k_low[0]]:g}")
    return {
        "is_valid": not errors,
        "errors": errors,
        "small_enough": not errors,
        "max_upper": float(upper[k_up]),
        "min_lower": float(lower[k_low]),
        "witness_upper": {"x2": float(x2[k_up[1]]), "c": float(shifts[k_up[0]])},
        "witness_lower": {"x2": float(x2[k_low[1]]), "c": float(shifts[k_low[0]])},
    }


def uniform_energy_bound(report: SolveReport, grid, ps: PotentialSpec, theta: float = 1.5,
                         beta: float = 1.25) -> Dict:
    """Every minimal action along the schedule against the explicit initial-guess bound at its eps."""
    dom = grid.domain
    bounds = [initial_guess_bound(r.eps, dom, grid, ps, theta, beta) for r in report.records]
    errors = [
        f"eps={r.eps:g}: action {r.action:.6g} exceeds bound {b:.6g}"
        for r, b in zip(report.records, bounds) if r.action > b
    ]
    eps_max = max(report.eps_values) if report.records else None
    return {
        "is_valid": not errors,
        "errors": errors,
        "bounds": bounds,
        "bound_at_largest_eps": bounds[report.eps_values.index(eps_max)] if report.records else None,
        "constant": max(bounds) if bounds else None,
        "min_action": min(report.actions) if report.records else None,
        "max_action": max(report.actions) if report.records else None,
    }
