"""
Run files.

A run file is TOML with the sections [domain], [grid], [regularization],
[potential], [solver], [diagnostics] and [output], plus a top-level seed.
Every violation is reported as ``path:line: section.key: message`` and all
of them are collected before ConfigError is raised.
"""
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from app.exceptions import ConfigError, DomainError
from app.grid import Domain, Grid
from app.potential import POTENTIALS, PotentialSpec, get_potential
from app.services.solver_service import SolveConfig, geometric_schedule

logger = logging.getLogger(__name__)

_SECTION = re.compile(r"^\s*\[\s*([A-Za-z0-9_]+)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")

_NUMBER = (int, float)


def _positive(v):
    return v > 0


def _unit_open(v):
    return 0.0 < v < 1.0


def _nonnegative(v):
    return v >= 0


# section -> key -> (accepted types, predicate or None, message when the predicate fails)
SCHEMA: Dict[str, Dict[str, Tuple]] = {
    "domain": {
        "T": (_NUMBER, _positive, "must be positive"),
        "L": (_NUMBER, _positive, "must be positive"),
        "g": (_NUMBER, _positive, "must be positive"),
        "A": (_NUMBER, _positive, "must be positive"),
        "n": ((int,), lambda v: v >= 2, "must be an integer >= 2"),
    },
    "grid": {
        "Nt": ((int,), lambda v: v >= 2, "must be an integer >= 2"),
        "Nx": ((int,), lambda v: v >= 2 and v % 2 == 0, "must be an even integer >= 2"),
    },
    "regularization": {
        "theta": (_NUMBER, lambda v: 1.0 < v < 2.0, "must lie in (1,2)"),
        "beta": (_NUMBER, lambda v: 1.0 < v < 2.0, "must lie in (1,2)"),
        "eps_schedule": ((list,), None, ""),
        "eps_start": (_NUMBER, _unit_open, "must lie in (0,1)"),
        "eps_stop": (_NUMBER, _unit_open, "must lie in (0,1)"),
        "eps_ratio": (_NUMBER, _unit_open, "must lie in (0,1)"),
    },
    "potential": {
        "name": ((str,), lambda v: v in POTENTIALS, f"must be one of {sorted(POTENTIALS)}"),
        "g": (_NUMBER, _positive, "must be positive"),
        "A": (_NUMBER, _positive, "must be positive"),
        "shift": ((str, int, float), lambda v: not isinstance(v, str) or v in ("auto", "none"), "must be \"auto\", \"none\" or a number"),
    },
    "solver": {
        "newton_tol": (_NUMBER, _positive, "must be positive"),
        "max_newton_iters": ((int,), lambda v: v >= 1, "must be a positive integer"),
        "ls_shrink": (_NUMBER, _unit_open, "must lie in (0,1)"),
        "ls_slope": (_NUMBER, lambda v: 0.0 < v < 0.5, "must lie in (0,1/2)"),
        "lm_shift0": (_NUMBER, _nonnegative, "must be nonnegative"),
        "max_ls_steps": ((int,), lambda v: v >= 1, "must be a positive integer"),
        "shrink": (_NUMBER, lambda v: 0.0 < v <= 1.0, "must lie in (0,1]"),
    },
    "diagnostics": {
        "tau": (_NUMBER, _positive, "must be positive"),
        "e_tilde": (_NUMBER, _positive, "must be positive"),
        "first_integral_tol": (_NUMBER, _positive, "must be positive"),
        "dissipation_tol": (_NUMBER, _positive, "must be positive"),
        "dissipation_mismatch_tol": (_NUMBER, _positive, "must be positive"),
        "membership_margin": (_NUMBER, _nonnegative, "must be nonnegative"),
        "max_principle_tol": (_NUMBER, _nonnegative, "must be nonnegative"),
        "trace_slack": (_NUMBER, _nonnegative, "must be nonnegative"),
        "kinetic_tol": (_NUMBER, _positive, "must be positive"),
        "oracle_restarts": ((int,), lambda v: v >= 1, "must be a positive integer"),
        "oracle_tol": (_NUMBER, _positive, "must be positive"),
        "T_values": ((list,), None, ""),
        "subsolution": ((bool,), None, ""),
        "potential_conditions": ((bool,), None, ""),
    },
    "output": {
        "directory": ((str,), lambda v: bool(v.strip()), "must not be empty"),
    },
}


@dataclass(frozen=True)
class Diagnostics:
    tau: float = 1e-4
    e_tilde: float = 1e-3
    first_integral_tol: float = 1e-3
    dissipation_tol: float = 1e-3
    dissipation_mismatch_tol: float = 1e-2
    membership_margin: float = 0.0
    max_principle_tol: float = 1e-6
    trace_slack: float = 1e-4
    kinetic_tol: float = 1e-2
    oracle_restarts: int = 20
    oracle_tol: float = 1e-10
    T_values: Tuple[float, ...] = (1.0, 2.0, 4.0)
    subsolution: bool = True
    potential_conditions: bool = True


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs; built by load_run_config or directly in code."""

    domain: Domain = field(default_factory=Domain)
    Nt: int = 16
    Nx: int = 16
    solver: SolveConfig = field(default_factory=SolveConfig)
    potential_name: str = "example"
    potential_overrides: Dict[str, float] = field(default_factory=dict)
    shift: Union[None, str, float] = "auto"
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    output_dir: Optional[str] = None
    seed: Optional[int] = None
    source: Optional[str] = None

    @property
    def grid(self) -> Grid:
        return Grid(self.domain, self.Nt, self.Nx)

    def potential(self, dom: Optional[Domain] = None) -> PotentialSpec:
        """The named potential on dom (defaults to the run domain) with overrides and shift applied."""
        dom = dom or self.domain
        potential_domain = replace(dom, **self.potential_overrides) if self.potential_overrides else dom
        return get_potential(self.potential_name, potential_domain, self.shift)

    def with_T(self, T: float) -> "RunConfig":
        return replace(self, domain=replace(self.domain, T=T))

    def to_dict(self) -> Dict:
        return {
            "domain": {k: getattr(self.domain, k) for k in ("T", "L", "g", "A", "n")},
            "grid": {"Nt": self.Nt, "Nx": self.Nx},
            "regularization": {
                "theta": self.solver.theta,
                "beta": self.solver.beta,
                "eps_schedule": list(self.solver.eps_schedule),
            },
            "potential": {
                "name": self.potential_name,
                "shift": "none" if self.shift is None else self.shift,
                **self.potential_overrides,
            },
            "solver": {
                "newton_tol": self.solver.newton_tol,
                "max_newton_iters": self.solver.max_newton_iters,
                "ls_shrink": self.solver.ls_shrink,
                "ls_slope": self.solver.ls_slope,
                "lm_shift0": self.solver.lm_shift0,
                "max_ls_steps": self.solver.max_ls_steps,
                "shrink": self.solver.shrink,
            },
            "diagnostics": {
                k: list(v) if isinstance(v, tuple) else v
                for k, v in asdict(self.diagnostics).items()
            },
            "output": {} if self.output_dir is None else {"directory": self.output_dir},
            **({} if self.seed is None else {"seed": self.seed}),
        }


def locate_keys(text: str) -> Dict[Tuple[Optional[str], Optional[str]], int]:
    """
    Line numbers (1-based) of section headers and keys.

    (section, None) maps to the header line, (section, key) to the key line;
    top-level keys use section None.
    """
    lines: Dict[Tuple[Optional[str], Optional[str]], int] = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        match = _SECTION.match(line)
        if match:
            section = match.group(1)
            lines.setdefault((section, None), number)
            continue
        match = _KEY.match(line)
        if match:
            lines.setdefault((section, match.group(1)), number)
    return lines


class _Collector:
    def __init__(self, path: str, lines: Dict):
        self.path = path
        self.lines = lines
        self.messages: List[str] = []

    def add(self, section: Optional[str], key: Optional[str], message: str):
        line = self.lines.get((section, key))
        if line is None and section is None:
            line = self.lines.get((key, None))
        line = line or self.lines.get((section, None)) or 1
        name = ".".join(part for part in (section, key) if part)
        self.messages.append(f"{self.path}:{line}: {name}: {message}")


def _check_table(data: Dict, errors: _Collector) -> Dict[str, Dict]:
    clean: Dict[str, Dict] = {}
    for key, value in data.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 2 ** 64:
                errors.add(None, "seed", f"must be an unsigned 64-bit integer, got {value!r}")
            continue
        if key not in SCHEMA:
            errors.add(None, key, "unknown section or key")
            continue
        if not isinstance(value, dict):
            errors.add(None, key, "must be a section")
            continue
        clean[key] = {}
        for name, item in value.items():
            spec = SCHEMA[key].get(name)
            if spec is None:
                errors.add(key, name, "unknown key")
                continue
            types, predicate, message = spec
            if isinstance(item, bool) and bool not in types:
                errors.add(key, name, f"has the wrong type {type(item).__name__}")
                continue
            if not isinstance(item, types):
                errors.add(key, name, f"has the wrong type {type(item).__name__}")
                continue
            if predicate is not None and not predicate(item):
                errors.add(key, name, f"{message}, got {item!r}")
                continue
            clean[key][name] = item
    return clean


def _schedule(reg: Dict, errors: _Collector) -> Optional[Tuple[float, ...]]:
    if "eps_schedule" in reg:
        values = reg["eps_schedule"]
        if not values or not all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in values):
            errors.add("regularization", "eps_schedule", "must be a nonempty list of numbers")
            return None
        if any(not 0.0 < v < 1.0 for v in values):
            errors.add("regularization", "eps_schedule", f"entries must lie in (0,1), got {values}")
            return None
        if any(b >= a for a, b in zip(values, values[1:])):
            errors.add("regularization", "eps_schedule", f"must be strictly decreasing, got {values}")
            return None
        return tuple(float(v) for v in values)
    try:
        return geometric_schedule(
            reg.get("eps_start", 0.2), reg.get("eps_stop", 1e-3), reg.get("eps_ratio", 0.5)
        )
    except DomainError as e:
        errors.add("regularization", "eps_start", str(e))
        return None


def build_run_config(data: Dict, path: str = "<run>", text: str = "") -> RunConfig:
    """Validate a parsed run table and build the RunConfig; raises ConfigError with every violation."""
    errors = _Collector(path, locate_keys(text))
    clean = _check_table(data, errors)

    dom_values = clean.get("domain", {})
    domain = None
    try:
        domain = Domain(**{k: float(v) if k != "n" else v for k, v in dom_values.items()})
    except DomainError as e:
        errors.add("domain", None, str(e))

    grid_values = clean.get("grid", {})
    Nt, Nx = grid_values.get("Nt", 16), grid_values.get("Nx", 16)
    if domain is not None:
        try:
            Grid(domain, Nt, Nx)
        except DomainError as e:
            errors.add("grid", None, str(e))

    reg = clean.get("regularization", {})
    schedule = _schedule(reg, errors)
    theta, beta = float(reg.get("theta", 1.5)), float(reg.get("beta", 1.25))
    coupled = beta < 3.0 - theta
    if not coupled:
        errors.add("regularization", "beta", f"must be below 3 - theta = {3.0 - theta:g}, got {beta:g}")
    solver = None
    if schedule is not None and coupled:
        try:
            solver = SolveConfig(
                eps_schedule=schedule,
                theta=theta,
                beta=beta,
                **clean.get("solver", {}),
            )
        except DomainError as e:
            errors.add("solver", None, str(e))

    pot = dict(clean.get("potential", {}))
    name = pot.pop("name", "example")
    shift = pot.pop("shift", "auto")
    overrides = {k: float(v) for k, v in pot.items()}

    diag_values = dict(clean.get("diagnostics", {}))
    if "T_values" in diag_values:
        T_values = diag_values["T_values"]
        if not T_values or not all(isinstance(v, _NUMBER) and not isinstance(v, bool) and v > 0 for v in T_values):
            errors.add("diagnostics", "T_values", f"must be a nonempty list of positive numbers, got {T_values}")
            diag_values.pop("T_values")
        else:
            diag_values["T_values"] = tuple(float(v) for v in T_values)
    diagnostics = Diagnostics(**diag_values)

    if errors.messages:
        for message in errors.messages:
            logger.error(message)
        raise ConfigError(errors.messages)

    return RunConfig(
        domain=domain,
        Nt=Nt,
        Nx=Nx,
        solver=solver,
        potential_name=name,
        potential_overrides=overrides,
        shift=None if shift == "none" else shift if isinstance(shift, str) else float(shift),
        diagnostics=diagnostics,
        output_dir=clean.get("output", {}).get("directory"),
        seed=data.get("seed"),
        source=path,
    )


def parse_run_config(text: str, path: str = "<run>") -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"{path}: {e}"]) from e
    return build_run_config(data, path, text)


def load_run_config(path: str) -> RunConfig:
    """
    Read and validate a run file.

    Raises:
        ConfigError: unreadable file, TOML syntax error or invalid values
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigError([f"{path}: cannot read run file: {e.strerror or e}"]) from e
    return parse_run_config(text, path)
