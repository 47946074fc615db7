"""
Command surface: solve, verify, sweep-T, check-potential and oracle.

Exit codes: 0 pass, 1 input error, 2 solver non-convergence, 3 verification failure.
"""
import argparse
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.exceptions import (
    ConfigError, DegenerateCellError, DomainError, NonConvergenceError, PreconditionError, RTActionError,
)
from app.grid import impose_boundary
from app.integrand import RegularizationParams
from app.run_config import RunConfig, build_run_config, load_run_config
from app.services import export_service as export
from app.services.analysis_service import (
    KineticRun, barrier_check, dissipation_check, energy_trace, first_integral_deviation, kinetic_jump_vs_T,
    mixing_zone, one_sided_min_principle, row_extremes, trace_attainment, uniform_energy_bound,
)
from app.services.oracle_service import oracle_minimize
from app.services.solver_service import (
    SolveRecord, SolveReport, continuation_solve, initial_guess, newton_solve, successive_differences,
)
from app.services.subsolution_service import (
    kinetic_density, lambda_max_closed_form, lambda_max_general, continuity_residual, reconstruct,
    reduced_action, to_two_phase, two_phase_action,
)
from app.validators.potential_validator import check_conditions, check_supremum
from app.validators.subsolution_validator import admissibility, verify_membership

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGENCE = 2
EXIT_VERIFICATION = 3

RUN_FILE = "run.json"
REPORT_FILE = "solve_report.json"
FINAL_FIELD = "field_final.txt"
LAST_ITERATE = "field_last_iterate.txt"
ENERGY_FILE = "energy.csv"
VERIFICATION_FILE = "verification.txt"
VERIFICATION_DETAILS = "verification.json"
SWEEP_TABLE = "kinetic_jump.csv"

# continuity residual bound is this constant times h^2
CONTINUITY_CONSTANT = 50.0
LAMBDA_TOL = 1e-10
TWO_PHASE_TOL = 1e-12
KINETIC_IDENTITY_TOL = 1e-12


@dataclass
class SolveOutcome:
    status: int
    T: float
    action: Optional[float] = None
    trace: Optional[object] = None
    message: str = ""


def _report_from_dict(data: Dict) -> SolveReport:
    return SolveReport([SolveRecord(**record) for record in data.get("records", [])])


def _write_run(out_dir: str, cfg: RunConfig, extra: Optional[Dict] = None):
    payload = cfg.to_dict()
    if extra:
        payload.update(extra)
    export.write_json(os.path.join(out_dir, RUN_FILE), payload)


def cmd_solve(cfg: RunConfig, out_dir: str) -> int:
    """
    Continuation solve; writes one field dump per eps, the final field, the
    energy trace of the final field and the solve report.

    Artifacts are written on non-convergence too (exit 2).
    """
    os.makedirs(out_dir, exist_ok=True)
    outcome = _solve(cfg, out_dir)
    if outcome.status == EXIT_OK:
        logger.info(f"Solve finished in {out_dir}: action={outcome.action:.12g}")
    return outcome.status


def _solve(cfg: RunConfig, out_dir: str) -> SolveOutcome:
    dom, grid = cfg.domain, cfg.grid
    ps = cfg.potential()
    _write_run(out_dir, cfg, {"shift_constant": ps.shift_constant})

    def save(eps, u, record):
        export.dump_field(os.path.join(out_dir, export.field_filename(eps)), u)

    try:
        solutions, report = continuation_solve(cfg.solver, dom, grid, ps, on_solution=save)
    except NonConvergenceError as e:
        logger.error(f"T={dom.T:g}: {e}")
        if e.last_iterate is not None:
            export.dump_field(os.path.join(out_dir, LAST_ITERATE), e.last_iterate)
        if e.report is not None:
            export.write_json(os.path.join(out_dir, REPORT_FILE), {**e.report.to_dict(), "failed_eps": e.eps})
        return SolveOutcome(EXIT_NONCONVERGENCE, dom.T, message=str(e))

    eps, u = solutions[-1]
    export.dump_field(os.path.join(out_dir, FINAL_FIELD), u)
    trace = energy_trace(u, eps, ps, cfg.solver.theta, cfg.solver.beta, cfg.solver.shrink)
    export.write_energy_trace(os.path.join(out_dir, ENERGY_FILE), trace)
    export.write_json(os.path.join(out_dir, REPORT_FILE), {
        **report.to_dict(),
        "successive_differences": successive_differences(solutions),
    })
    return SolveOutcome(EXIT_OK, dom.T, action=report.records[-1].action, trace=trace)


def _load_solution(directory: str):
    run_path = os.path.join(directory, RUN_FILE)
    field_path = os.path.join(directory, FINAL_FIELD)
    missing = [p for p in (run_path, field_path) if not os.path.isfile(p)]
    if missing:
        raise ConfigError([f"{p}: missing artifact" for p in missing])
    data = export.read_json(run_path)
    # informational; the shift is recomputed from the potential settings
    data.pop("shift_constant", None)
    cfg = build_run_config(data, run_path)
    u = export.load_field(field_path, cfg.domain)
    report_path = os.path.join(directory, REPORT_FILE)
    report = _report_from_dict(export.read_json(report_path)) if os.path.isfile(report_path) else None
    return cfg, u, report


def _check(checks: List[Tuple], name: str, value: float, bound: float, passed: bool):
    checks.append((name, float(value), float(bound), bool(passed)))


def verification_battery(cfg: RunConfig, u, report: Optional[SolveReport], out_dir: str):
    """
    Run the analysis and subsolution batteries on a solved field.

    Returns:
        (checks, details): checks are (name, value, bound, passed) tuples in report order
    """
    dom, grid = cfg.domain, u.grid
    diag = cfg.diagnostics
    eps = cfg.solver.eps_schedule[-1]
    beta, theta = cfg.solver.beta, cfg.solver.theta
    checks: List[Tuple] = []
    details: Dict = {"eps": eps}

    non_finite = int(np.count_nonzero(~np.isfinite(u.values)))
    _check(checks, "field_finite", non_finite, 0, non_finite == 0)
    if non_finite:
        logger.error(f"Field holds {non_finite} non-finite values; remaining checks skipped")
        return checks, details

    gap = float(np.max(np.abs(impose_boundary(u, eps, dom, beta).values - u.values)))
    _check(checks, "boundary_data", gap, 0.0, gap == 0.0)

    ps = cfg.potential()
    conditions = check_conditions(ps, dom) if diag.potential_conditions else None
    concave = conditions is None or conditions["conditions"]["V_con"]["is_valid"]
    if conditions is not None:
        details["potential_conditions"] = {k: v["is_valid"] for k, v in conditions["conditions"].items()}

    tol = diag.max_principle_tol
    extremes = row_extremes(u, eps, beta)
    _check(checks, "max_principle", extremes["max_principle_excess"], tol, extremes["max_principle_excess"] <= tol)
    _check(checks, "monotone_in_time", -extremes["min_dx1"], tol, extremes["min_dx1"] >= -tol)
    slope_bound = 1.0 + eps + tol
    _check(checks, "slope_bound", extremes["max_abs_dx2"], slope_bound, extremes["max_abs_dx2"] <= slope_bound)

    trace = energy_trace(u, eps, ps, theta, beta, cfg.solver.shrink)
    deviation = first_integral_deviation(trace)
    bound = diag.first_integral_tol * (abs(trace.mean_H) + 1.0)
    _check(checks, "first_integral", deviation, bound, deviation <= bound)

    dissipation = dissipation_check(trace, ps, diag.dissipation_tol, diag.dissipation_mismatch_tol)
    _check(checks, "dissipation", dissipation["max_derivative"], diag.dissipation_tol, dissipation["is_valid"])

    traces = trace_attainment(u, slack=diag.trace_slack)
    b1_excess = max(v - b for v, b in zip(traces["B1"], traces["B1_bound"]))
    _check(checks, "trace_B1", b1_excess, 0.0, traces["is_valid"])
    _check(checks, "trace_A1_monotone", traces["A1"][-1], traces["A1"][0] + diag.trace_slack, traces["A1_monotone"])
    _check(checks, "trace_C1_monotone", traces["C1"][-1], traces["C1"][0] + diag.trace_slack, traces["C1_monotone"])
    details["trace_attainment"] = traces

    if concave:
        minimum = one_sided_min_principle(u, tol=tol)
        if minimum["rows"]:
            worst = min(row["excess"] for row in minimum["rows"])
            _check(checks, "min_principle_dx1", worst, -tol, minimum["is_valid"])
        zone = mixing_zone(u, diag.tau)
        holes = sum(zone.holes)
        _check(checks, "mixing_zone_holes", holes, 0, holes == 0)
        details["mixing_zone"] = {"cells": int(zone.mask.sum()), "components": zone.components}

    if report is not None and report.records:
        energy = uniform_energy_bound(report, grid, ps, theta, beta)
        excess = max(r.action - b for r, b in zip(report.records, energy["bounds"]))
        _check(checks, "uniform_energy_bound", excess, 0.0, energy["is_valid"])
        details["uniform_energy_bound"] = energy

    details["barrier"] = barrier_check(RegularizationParams(eps, theta, beta), ps, grid, shrink=cfg.solver.shrink)

    if diag.subsolution:
        if conditions is not None:
            supremum = conditions["conditions"]["V_sup"]["is_valid"]
        else:
            supremum = check_supremum(ps, dom)["is_valid"]
        _subsolution_checks(checks, details, u, cfg, out_dir, supremum)
    return checks, details


def _subsolution_checks(checks, details, u, cfg: RunConfig, out_dir: str, supremum: bool = True):
    """
    Subsolution battery on the reconstruction of u.

    Admissibility is asserted only when the potential satisfies V_sup;
    otherwise its margins are recorded and the check is left out.
    """
    dom, grid = cfg.domain, u.grid
    diag = cfg.diagnostics
    try:
        sf = reconstruct(u, diag.e_tilde, dom, diag.tau)
    except DegenerateCellError as e:
        _check(checks, "subsolution_reconstruct", len(e.cells), 0, False)
        return
    export.write_subsolution(os.path.join(out_dir, "subsolution"), sf, diag.e_tilde)

    mask = sf.mask
    expected = np.where(mask, sf.m ** 2 / (2.0 * (1.0 - np.where(mask, sf.rho, 0.0) ** 2)) + 0.5 * sf.n * diag.e_tilde, 0.0)
    density = kinetic_density(sf)
    identity_gap = float(np.max(np.abs(density - expected) / (1.0 + np.abs(expected)))) if mask.any() else 0.0
    _check(checks, "kinetic_identity", identity_gap, KINETIC_IDENTITY_TOL, identity_gap <= KINETIC_IDENTITY_TOL)

    membership = verify_membership(sf, dom, diag.membership_margin)
    margins = [m for m in membership["margins"].values() if m is not None]
    _check(checks, "membership", min(margins) if margins else 0.0, diag.membership_margin, membership["is_valid"])
    details["membership"] = membership

    cells = [tuple(int(k) for k in c) for c in np.argwhere(mask)[:64]]
    if cells:
        general = lambda_max_general(sf, cells)
        closed = lambda_max_closed_form(sf)[tuple(np.array(cells).T)]
        gap = float(np.max(np.abs(general - closed) / (1.0 + np.abs(closed))))
        _check(checks, "lambda_max", gap, LAMBDA_TOL, gap <= LAMBDA_TOL)

    admissible = admissibility(sf, dom)
    margin = admissible["min_interior_margin"]
    if supremum:
        _check(checks, "admissibility", margin if margin is not None else 0.0, 0.0, admissible["is_valid"])
    else:
        logger.warning(f"Admissibility not asserted: the potential violates V_sup (min interior margin {margin})")
    details["admissibility"] = {
        "asserted": supremum,
        "is_valid": admissible["is_valid"],
        "min_interior_margin": margin,
        "reason": None if supremum else "potential violates V_sup",
    }
    details["energy_profile"] = (dom.gA * dom.L ** 2 - admissible["margins"]).tolist()

    residual = continuity_residual(sf, dom, u)
    bound = CONTINUITY_CONSTANT * max(grid.ht, grid.hx) ** 2
    _check(checks, "continuity_residual", residual, bound, residual <= bound)

    tp = to_two_phase(sf, dom)
    reduced = reduced_action(grid, sf.rho, sf.m, dom)
    gap = abs(two_phase_action(tp, dom) - reduced / (2.0 * dom.L))
    bound = TWO_PHASE_TOL * (1.0 + abs(reduced))
    _check(checks, "two_phase_action", gap, bound, gap <= bound)


def cmd_verify(directory: str) -> int:
    """Run the verification batteries on a solve directory; exit 0 iff every asserted check passes."""
    try:
        cfg, u, report = _load_solution(directory)
    except (ConfigError, DomainError, OSError, ValueError) as e:
        logger.error(f"Cannot verify {directory}: {e}")
        return EXIT_INPUT
    checks, details = verification_battery(cfg, u, report, directory)
    export.write_verification_report(os.path.join(directory, VERIFICATION_FILE), checks)
    export.write_json(os.path.join(directory, VERIFICATION_DETAILS), details)
    failed = [c[0] for c in checks if not c[3]]
    if failed:
        logger.warning(f"Verification failed: {', '.join(failed)}")
        return EXIT_VERIFICATION
    logger.info(f"Verification passed: {len(checks)} checks")
    return EXIT_OK


def cmd_sweep_T(cfg: RunConfig, T_values: Sequence[float], out_dir: str, threads: int = 1) -> int:
    """
    Independent solves for every T (in parallel), then the kinetic-jump table.

    A failed member solve gives exit 2 with the table of the runs that converged.
    """
    T_values = sorted(set(float(T) for T in T_values))
    if not any(abs(T - 1.0) <= 1e-12 for T in T_values):
        logger.error(f"T list {T_values} does not contain 1")
        return EXIT_INPUT
    os.makedirs(out_dir, exist_ok=True)

    def run(T):
        sub_dir = os.path.join(out_dir, f"T_{T:g}")
        os.makedirs(sub_dir, exist_ok=True)
        return _solve(cfg.with_T(T), sub_dir)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        outcomes = list(executor.map(run, T_values))

    runs = [KineticRun(o.T, o.action, o.trace) for o in outcomes if o.status == EXIT_OK]
    failed = [o for o in outcomes if o.status != EXIT_OK]
    table_path = os.path.join(out_dir, SWEEP_TABLE)
    if any(abs(r.T - 1.0) <= 1e-12 for r in runs):
        result = kinetic_jump_vs_T(runs, cfg.diagnostics.kinetic_tol)
        export.write_sweep_table(table_path, result["rows"])
    else:
        result = {"is_valid": False, "errors": ["run at T = 1 did not converge"], "rows": []}
        export.write_sweep_table(table_path, [])
    if failed:
        logger.error(f"Sweep members failed at T = {[o.T for o in failed]}")
        return EXIT_NONCONVERGENCE
    return EXIT_OK if result["is_valid"] else EXIT_VERIFICATION


def cmd_check_potential(cfg: RunConfig, out_dir: str) -> int:
    """check_conditions on the configured potential; one report line per condition."""
    os.makedirs(out_dir, exist_ok=True)
    ps = cfg.potential()
    result = check_conditions(ps, cfg.domain)
    checks = [
        (name, len(report["errors"]), 0, report["is_valid"])
        for name, report in result["conditions"].items()
    ]
    export.write_verification_report(os.path.join(out_dir, "potential_conditions.txt"), checks)
    export.write_json(os.path.join(out_dir, "potential_conditions.json"), result)
    for message in result["errors"]:
        logger.warning(message)
    return EXIT_OK if result["is_valid"] else EXIT_VERIFICATION


def cmd_oracle(cfg: RunConfig, out_dir: str) -> int:
    """Newton against restarted coordinate descent at the first eps of the schedule on a tiny grid."""
    os.makedirs(out_dir, exist_ok=True)
    dom, grid = cfg.domain, cfg.grid
    eps = cfg.solver.eps_schedule[0]
    ps = cfg.potential()
    diag = cfg.diagnostics
    try:
        oracle = oracle_minimize(dom, grid, eps, ps, restarts=diag.oracle_restarts, seed=cfg.seed or 0,
                                 theta=cfg.solver.theta, beta=cfg.solver.beta, shrink=cfg.solver.shrink,
                                 tol=diag.oracle_tol)
    except PreconditionError as e:
        logger.error(str(e))
        return EXIT_INPUT
    try:
        _, record = newton_solve(initial_guess(eps, dom, grid, cfg.solver.beta), eps, cfg.solver, ps)
    except NonConvergenceError as e:
        logger.error(str(e))
        return EXIT_NONCONVERGENCE
    gap = abs(record.action - oracle.action)
    bound = 1e-6 * (1.0 + abs(record.action))
    checks = [
        ("oracle_agreement", gap, bound, gap <= bound),
        ("oracle_restart_spread", oracle.restart_spread, 1e-7, oracle.restart_spread <= 1e-7),
    ]
    export.write_verification_report(os.path.join(out_dir, "oracle.txt"), checks)
    export.write_json(os.path.join(out_dir, "oracle.json"), {
        "eps": eps,
        "newton_action": record.action,
        "oracle_action": oracle.action,
        "restart_actions": oracle.restart_actions,
        "sweeps": oracle.sweeps,
    })
    return EXIT_OK if all(c[3] for c in checks) else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rt-action", description="Regularized Rayleigh-Taylor action solver")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed for sampling-based checks")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("solve", parents=[common], help="continuation solve")
    verify = commands.add_parser("verify", parents=[common], help="verify a solve directory")
    verify.add_argument("directory", nargs="?", help="directory written by solve (defaults to --out)")
    sweep = commands.add_parser("sweep-T", parents=[common], help="kinetic jump against T")
    sweep.add_argument("--threads", type=int, help="parallel solves")
    sweep.add_argument("--T", dest="T_values", type=float, nargs="+", help="final times (must include 1)")
    commands.add_parser("check-potential", parents=[common], help="check the potential conditions")
    commands.add_parser("oracle", parents=[common], help="compare Newton with coordinate descent")
    return parser


class CommandApp:
    """Resolves run settings (flags over run file over environment) and dispatches commands."""

    def __init__(self, config_class):
        self.config = config_class

    def resolve(self, args) -> RunConfig:
        path = args.config or self.config.RUN_CONFIG
        cfg = load_run_config(path) if path else RunConfig()
        seed = args.seed if args.seed is not None else cfg.seed if cfg.seed is not None else self.config.SEED
        out = args.out or cfg.output_dir or self.config.OUTPUT_DIR
        return replace(cfg, seed=seed, output_dir=out)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        args = build_parser().parse_args(argv)
        try:
            if args.command == "verify" and args.directory:
                return cmd_verify(args.directory)
            cfg = self.resolve(args)
            if args.command == "solve":
                return cmd_solve(cfg, cfg.output_dir)
            if args.command == "verify":
                return cmd_verify(cfg.output_dir)
            if args.command == "sweep-T":
                threads = args.threads or self.config.THREADS
                return cmd_sweep_T(cfg, args.T_values or cfg.diagnostics.T_values, cfg.output_dir, threads)
            if args.command == "check-potential":
                return cmd_check_potential(cfg, cfg.output_dir)
            return cmd_oracle(cfg, cfg.output_dir)
        except ConfigError as e:
            for message in e.messages:
                logger.error(message)
            return EXIT_INPUT
        except (DomainError, PreconditionError) as e:
            logger.error(f"Invalid input: {e}")
            return EXIT_INPUT
        except RTActionError as e:
            logger.error(f"Run failed: {e}")
            return EXIT_VERIFICATION
