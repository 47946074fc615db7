"""
Result files.

Field dumps: line 1 ``Nt Nx T L``, then one line per time level with the
nodal values, all reals with 17 significant digits so that a dump reloads
bit for bit.  Cell fields use the same layout with Nt lines of Nx values.
"""
import json
import logging
import os
from dataclasses import replace
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from app.exceptions import DomainError
from app.grid import Domain, Grid, ScalarField

logger = logging.getLogger(__name__)

REAL_FORMAT = "%.17g"
ENERGY_HEADER = "row,x1,E_kin,E_pot,E_f,H,D"
SUBSOLUTION_COMPONENTS = ("rho", "m", "e0", "e1", "sigma_nn", "p", "e_tilde")


def _header(grid: Grid) -> str:
    return f"{grid.Nt} {grid.Nx} {grid.domain.T:.17g} {grid.domain.L:.17g}"


def dump_array(path: str, grid: Grid, values: np.ndarray):
    """Write a nodal (Nt+1, Nx+1) or cell (Nt, Nx) array under the grid header."""
    values = np.asarray(values, dtype=float)
    if values.shape not in (grid.shape, (grid.Nt, grid.Nx)):
        raise DomainError(f"Array of shape {values.shape} does not live on grid {grid.shape}")
    np.savetxt(path, values, fmt=REAL_FORMAT, delimiter=" ", header=_header(grid), comments="")


def dump_field(path: str, u: ScalarField):
    dump_array(path, u.grid, u.values)
    logger.debug(f"Field written to {path}")


def _read_dump(path: str):
    with open(path, "r") as handle:
        header = handle.readline().split()
    if len(header) != 4:
        raise DomainError(f"{path}: header must read 'Nt Nx T L', got {' '.join(header)!r}")
    try:
        Nt, Nx = int(header[0]), int(header[1])
        T, L = float(header[2]), float(header[3])
    except ValueError as e:
        raise DomainError(f"{path}: malformed header: {e}") from e
    values = np.loadtxt(path, skiprows=1, ndmin=2)
    return Nt, Nx, T, L, values


def load_field(path: str, dom: Optional[Domain] = None) -> ScalarField:
    """
    Read a nodal dump.

    Args:
        path: dump file
        dom: domain supplying n, g, A; T and L always come from the header
    """
    Nt, Nx, T, L, values = _read_dump(path)
    domain = replace(dom, T=T, L=L) if dom is not None else Domain(T=T, L=L)
    grid = Grid(domain, Nt, Nx)
    if values.shape != grid.shape:
        raise DomainError(f"{path}: expected {grid.shape} values, found {values.shape}")
    return ScalarField(grid, values)


def load_array(path: str) -> np.ndarray:
    return _read_dump(path)[4]


def write_energy_trace(path: str, trace):
    rows = np.column_stack([
        np.arange(len(trace.x1)), trace.x1, trace.E_kin, trace.E_pot, trace.E_f, trace.H, trace.D,
    ])
    np.savetxt(path, rows, fmt=["%d"] + [REAL_FORMAT] * 6, delimiter=",", header=ENERGY_HEADER, comments="")


def read_energy_trace(path: str) -> Dict[str, np.ndarray]:
    with open(path, "r") as handle:
        header = handle.readline().strip()
    if header != ENERGY_HEADER:
        raise DomainError(f"{path}: unexpected energy header {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(ENERGY_HEADER.split(","))}


def write_json(path: str, payload: Dict):
    """Deterministic JSON (sorted keys, no timestamps)."""
    with open(path, "w") as handle:
        json.dump(_plain(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path: str) -> Dict:
    with open(path, "r") as handle:
        return json.load(handle)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def format_check_line(name: str, value: float, bound: float, passed: bool) -> str:
    return f"{name} {value:.17g} {bound:.17g} {'PASS' if passed else 'FAIL'}"


def write_verification_report(path: str, checks: Iterable[Sequence]):
    """One line per check: name, value, bound, PASS/FAIL."""
    lines = [format_check_line(*check) for check in checks]
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def write_subsolution(directory: str, sf, e_tilde: float):
    """One cell-field dump per component plus manifest.json."""
    os.makedirs(directory, exist_ok=True)
    for name in SUBSOLUTION_COMPONENTS:
        dump_array(os.path.join(directory, f"{name}.txt"), sf.grid, getattr(sf, name))
    dump_array(os.path.join(directory, "mask.txt"), sf.grid, sf.mask.astype(float))
    write_json(os.path.join(directory, "manifest.json"), {
        "components": list(SUBSOLUTION_COMPONENTS) + ["mask"],
        "n": sf.n,
        "e_tilde": e_tilde,
        "tau": sf.tau,
    })


def write_sweep_table(path: str, rows: List[Dict]):
    """Kinetic-jump table: T, c_start, c_end, bound, action, passes."""
    header = "T,c_start,c_end,bound,action,passes"
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['T']:.17g},{row['c_start']:.17g},{row['c_end']:.17g},"
            f"{row['bound']:.17g},{row['action']:.17g},{int(bool(row['passes']))}"
        )
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def field_filename(eps: float) -> str:
    return f"field_eps_{eps:.6e}.txt"
