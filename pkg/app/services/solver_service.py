"""
Minimization of the discrete regularized action.

newton_solve runs a damped Newton iteration with a Levenberg shift on one eps;
continuation_solve walks a decreasing eps schedule, warm-starting every solve
from the previous solution with the boundary data of the new eps.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import identity
from scipy.sparse.linalg import splu

from app.exceptions import DomainError, EvaluationError, NonConvergenceError, PreconditionError
from app.grid import Domain, Grid, ScalarField, boundary_profile, impose_boundary, quadrature
from app.potential import PotentialSpec
from app.services.action_service import DiscreteAction, discrete_action
from app.utils.logger import log_solve

logger = logging.getLogger(__name__)

MACHINE_EPS = np.finfo(float).eps
# consecutive shift increases before a Newton step is abandoned
MAX_SHIFT_RETRIES = 60


def geometric_schedule(start: float = 0.2, stop: float = 1e-3, ratio: float = 0.5) -> Tuple[float, ...]:
    """start, start*ratio, ... while above stop, then stop itself."""
    if not 0.0 < ratio < 1.0:
        raise DomainError(f"ratio must lie in (0,1), got {ratio}")
    if not 0.0 < stop <= start < 1.0:
        raise DomainError(f"need 0 < stop <= start < 1, got start={start}, stop={stop}")
    values = []
    eps = start
    while eps > stop * (1.0 + 1e-12):
        values.append(eps)
        eps *= ratio
    values.append(stop)
    return tuple(values)


@dataclass(frozen=True)
class SolveConfig:
    eps_schedule: Tuple[float, ...] = field(default_factory=geometric_schedule)
    newton_tol: float = 1e-9
    max_newton_iters: int = 200
    ls_shrink: float = 0.5
    ls_slope: float = 1e-4
    lm_shift0: float = 0.0
    max_ls_steps: int = 60
    theta: float = 1.5
    beta: float = 1.25
    shrink: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "eps_schedule", tuple(float(e) for e in self.eps_schedule))
        errors = []
        schedule = self.eps_schedule
        if not schedule:
            errors.append("eps_schedule is empty")
        if any(not 0.0 < e < 1.0 for e in schedule):
            errors.append(f"eps_schedule entries must lie in (0,1), got {list(schedule)}")
        if any(b >= a for a, b in zip(schedule, schedule[1:])):
            errors.append(f"eps_schedule must be strictly decreasing, got {list(schedule)}")
        if not self.newton_tol > 0:
            errors.append(f"newton_tol must be positive, got {self.newton_tol}")
        if int(self.max_newton_iters) != self.max_newton_iters or self.max_newton_iters < 1:
            errors.append(f"max_newton_iters must be a positive integer, got {self.max_newton_iters}")
        if not 0.0 < self.ls_shrink < 1.0:
            errors.append(f"ls_shrink must lie in (0,1), got {self.ls_shrink}")
        if not 0.0 < self.ls_slope < 0.5:
            errors.append(f"ls_slope must lie in (0,1/2), got {self.ls_slope}")
        if self.lm_shift0 < 0:
            errors.append(f"lm_shift0 must be nonnegative, got {self.lm_shift0}")
        if not 0.0 < self.shrink <= 1.0:
            errors.append(f"shrink must lie in (0,1], got {self.shrink}")
        if not 1.0 < self.theta < 2.0:
            errors.append(f"theta must lie in (1,2), got {self.theta}")
        elif not 1.0 < self.beta < 3.0 - self.theta:
            errors.append(f"beta must lie in (1, 3 - theta) = (1, {3.0 - self.theta:g}), got {self.beta}")
        if errors:
            raise DomainError(f"Invalid solver configuration: {', '.join(errors)}")


@dataclass
class SolveRecord:
    eps: float
    action: float
    grad_norm: float
    iterations: int
    line_search_steps: int
    el_residual_norm: float
    lm_shift: float
    action_history: List[float] = field(default_factory=list)
    converged: bool = True

    def to_dict(self):
        return asdict(self)


@dataclass
class SolveReport:
    records: List[SolveRecord] = field(default_factory=list)

    def append(self, record: SolveRecord):
        self.records.append(record)

    @property
    def actions(self) -> List[float]:
        return [r.action for r in self.records]

    @property
    def eps_values(self) -> List[float]:
        return [r.eps for r in self.records]

    def to_dict(self):
        return {"records": [r.to_dict() for r in self.records]}


def initial_guess(eps: float, dom: Domain, grid: Grid, beta: float = 1.25) -> ScalarField:
    """w_eps(x) = -U_eps(x2) cos(pi x1 / T), with the traces of X_eps imposed exactly."""
    X1, X2 = grid.node_coordinates()
    values = -boundary_profile(X2, eps, beta, dom) * np.cos(np.pi * X1 / dom.T)
    return impose_boundary(ScalarField(grid, values), eps, dom, beta)


def initial_guess_bound(eps: float, dom: Domain, grid: Grid, ps: PotentialSpec,
                        theta: float = 1.5, beta: float = 1.25) -> float:
    """
    Explicit upper bound for the action of the initial guess.

    2 L pi^2 U(0)^2 / (T (1+eps)^2) + 2 L T eps^theta / ((1+eps)^2 - (1+eps^beta)^2)
    plus the integral of |V(x2, w_eps)|.
    """
    L, T = dom.L, dom.T
    U0 = boundary_profile(0.0, eps, beta, dom)
    a2 = (1.0 + eps) ** 2
    kinetic = 2.0 * L * np.pi ** 2 * U0 ** 2 / (T * a2) + 2.0 * L * T * eps ** theta / (a2 - (1.0 + eps ** beta) ** 2)
    w = initial_guess(eps, dom, grid, beta)
    potential = sum_abs_potential(w, ps)
    return float(kinetic + potential)


def sum_abs_potential(u: ScalarField, ps: PotentialSpec) -> float:
    return quadrature(u, lambda x1c, x2c, p1, p2, uc: np.abs(ps.V(x2c, uc)))


def _check_boundary(u0: ScalarField, eps: float, dom: Domain, beta: float):
    expected = impose_boundary(u0, eps, dom, beta).values
    if not np.array_equal(expected, u0.values):
        gap = float(np.max(np.abs(expected - u0.values)))
        logger.warning(f"Initial field violates the boundary data of eps={eps} by {gap:.3e}")
        raise PreconditionError(f"u0 does not carry the boundary data for eps={eps} (max gap {gap:.3e})")


def _safe_value(functional: DiscreteAction, u: ScalarField) -> float:
    try:
        return functional.value(u)
    except EvaluationError:
        return np.inf


def _factor_and_solve(H, g, mu):
    shifted = (H + mu * identity(H.shape[0], format="csc")).tocsc()
    lu = splu(
        shifted,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )
    return -lu.solve(g)


@log_solve
def newton_solve(u0: ScalarField, eps: float, cfg: SolveConfig, ps: PotentialSpec,
                 integrand=None) -> Tuple[ScalarField, SolveRecord]:
    """
    Damped Newton iteration with a Levenberg shift.

    Solves (H + mu I) d = -g, then backtracks along d until the Armijo
    condition holds.  mu grows when the factorization fails, when d is not a
    descent direction or when the line search fails; it shrinks tenfold after
    every accepted step.

    Args:
        u0: starting field carrying the boundary data of eps
        eps: regularization parameter
        cfg: solver configuration
        ps: potential
        integrand: optional integrand strategy (defaults to the fast extension at eps)

    Returns:
        (solution, record)

    Raises:
        NonConvergenceError: when max_newton_iters is exhausted
    """
    grid = u0.grid
    dom = grid.domain
    _check_boundary(u0, eps, dom, cfg.beta)
    functional = discrete_action(grid, ps, eps, cfg.theta, cfg.beta, cfg.shrink, integrand)

    u = u0
    x = grid.interior(u.values)
    value = functional.value(u)
    if not np.isfinite(value):
        raise PreconditionError(f"Initial action is not finite at eps={eps}")
    g = functional.gradient(u)
    mu = cfg.lm_shift0
    history = [value]
    ls_total = 0
    roundoff = 10.0 * MACHINE_EPS

    def record(iterations, converged):
        residual = functional.el_residual(u).values
        return SolveRecord(
            eps=eps,
            action=float(value),
            grad_norm=float(np.max(np.abs(g))) if g.size else 0.0,
            iterations=iterations,
            line_search_steps=ls_total,
            el_residual_norm=float(np.max(np.abs(residual))),
            lm_shift=float(mu),
            action_history=list(history),
            converged=converged,
        )

    for iteration in range(cfg.max_newton_iters):
        grad_norm = float(np.max(np.abs(g))) if g.size else 0.0
        logger.debug(f"eps={eps:.4g} iter={iteration} action={value:.15g} |g|={grad_norm:.3e} mu={mu:.3e}")
        if grad_norm <= cfg.newton_tol:
            rec = record(iteration, True)
            logger.info(
                f"eps={eps:.4g} converged in {iteration} iterations: action={value:.12g}, "
                f"|g|={grad_norm:.3e}, EL residual={rec.el_residual_norm:.3e}"
            )
            return u, rec

        H = functional.hessian(u)
        scale = max(float(np.max(np.abs(H.diagonal()))), 1.0)
        accepted = False
        for _ in range(MAX_SHIFT_RETRIES):
            try:
                d = _factor_and_solve(H, g, mu)
            except RuntimeError as e:
                logger.debug(f"Factorization failed with mu={mu:.3e}: {e}")
                mu = max(2.0 * mu, 1e-8 * scale)
                continue
            slope = float(g @ d)
            if not np.all(np.isfinite(d)) or slope >= 0.0:
                mu = max(2.0 * mu, 1e-8 * scale)
                continue

            step = 1.0
            for _ in range(cfg.max_ls_steps):
                ls_total += 1
                trial = ScalarField(grid, grid.with_interior(u.values, x + step * d))
                trial_value = _safe_value(functional, trial)
                slack = roundoff * (1.0 + abs(value))
                if trial_value <= value + cfg.ls_slope * step * slope + slack:
                    accepted = True
                    break
                step *= cfg.ls_shrink
            if accepted:
                break
            mu = max(2.0 * mu, 1e-8 * scale)

        if not accepted:
            logger.warning(f"eps={eps:.4g}: no acceptable step at iteration {iteration}")
            break

        value = trial_value
        u, x = trial, x + step * d
        g = functional.gradient(u)
        history.append(value)
        mu = mu / 10.0

    rec = record(len(history) - 1, False)
    logger.error(f"eps={eps:.4g}: Newton did not converge, |g|={rec.grad_norm:.3e}")
    raise NonConvergenceError(
        f"Newton iteration did not reach |g| <= {cfg.newton_tol:g} at eps={eps} "
        f"(|g| = {rec.grad_norm:.3e} after {rec.iterations} iterations)",
        last_iterate=u,
        report=rec,
        eps=eps,
    )


@log_solve
def continuation_solve(cfg: SolveConfig, dom: Domain, grid: Grid, ps: PotentialSpec,
                       u0: Optional[ScalarField] = None,
                       on_solution: Optional[Callable[[float, ScalarField, SolveRecord], None]] = None
                       ) -> Tuple[List[Tuple[float, ScalarField]], SolveReport]:
    """
    Solve along cfg.eps_schedule, warm-starting each eps from the previous one.

    Args:
        cfg: solver configuration
        dom: domain
        grid: grid on dom
        ps: potential
        u0: optional start for the first eps (defaults to the initial guess)
        on_solution: called with (eps, field, record) after every converged eps

    Raises:
        NonConvergenceError: carrying the eps that failed and a SolveReport
            holding every record up to and including the failed one
    """
    if grid.domain != dom:
        raise PreconditionError("Grid was built on a different domain")
    report = SolveReport()
    solutions: List[Tuple[float, ScalarField]] = []
    previous = u0
    for eps in cfg.eps_schedule:
        if previous is None:
            start = initial_guess(eps, dom, grid, cfg.beta)
        else:
            start = impose_boundary(previous, eps, dom, cfg.beta)
        try:
            u, rec = newton_solve(start, eps, cfg, ps)
        except NonConvergenceError as e:
            report.append(e.report)
            raise NonConvergenceError(str(e), last_iterate=e.last_iterate, report=report, eps=eps) from e
        report.append(rec)
        solutions.append((eps, u))
        if on_solution is not None:
            on_solution(eps, u, rec)
        previous = u
    return solutions, report


def successive_differences(solutions: Sequence[Tuple[float, ScalarField]]) -> List[float]:
    """Sup-norm distance between consecutive solutions of a continuation run."""
    return [
        float(np.max(np.abs(b.values - a.values)))
        for (_, a), (_, b) in zip(solutions, solutions[1:])
    ]
