"""
Writers for run results. Every file is written to a temporary sibling and
renamed into place, so readers never see a partial file.

    c_<step>.csv       cell,x,y,c
    flux_<step>.csv    edge,coefficient
    fields_<step>.vtk  legacy ASCII 4.2, CELL_DATA c, flux, Darcy velocity and head,
                       POINT_DATA vertex-averaged head
    ledger.csv         one row per step
    report.txt         echoed configuration and run summary
"""
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import meshio
import numpy as np

from aquitrans.analysis.convergence import ConvergenceTable
from aquitrans.discretization.assembly import rt0_cell_centroid_values
from aquitrans.discretization.mesh import Mesh
from aquitrans.physics.darcy import DarcySolution
from aquitrans.physics.transport import LedgerRow, TransportState

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
STEP_WIDTH = 5
VTK_VERSION = "4.2"
LEDGER_HEADER = ("step", "t", "increments_c", "sup_vc", "increments_vc", "div_flux", "space_time", "min_c")


def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return FLOAT_FORMAT % value


def _atomic_write(path: Path, write) -> Path:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        write(Path(tmp_name))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    def write(tmp: Path):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)

    return _atomic_write(path, write)


def _write_csv(path: Path, header: Sequence[str], rows, index_columns: int = 1) -> Path:
    """Comma-separated table: integer index columns first, then floats at full precision. None is written as nan."""
    table = np.array(rows, dtype=float).reshape(-1, len(header))
    fmt = ["%d"] * index_columns + [FLOAT_FORMAT] * (len(header) - index_columns)

    def write(tmp: Path):
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            np.savetxt(f, table, fmt=fmt, delimiter=",", header=",".join(header), comments="")

    return _atomic_write(Path(path), write)


def step_name(prefix: str, step: int, suffix: str) -> str:
    return f"{prefix}_{step:0{STEP_WIDTH}d}.{suffix}"


def write_concentration_csv(directory: Path, mesh: Mesh, state: TransportState) -> Path:
    rows = np.column_stack([np.arange(mesh.n_cells), mesh.centroids, state.c])
    return _write_csv(Path(directory) / step_name("c", state.n, "csv"), ("cell", "x", "y", "c"), rows)


def write_flux_csv(directory: Path, state: TransportState) -> Path:
    rows = np.column_stack([np.arange(state.vc.size), state.vc])
    return _write_csv(Path(directory) / step_name("flux", state.n, "csv"), ("edge", "coefficient"), rows)


def _planar(values: np.ndarray) -> np.ndarray:
    return np.column_stack([values, np.zeros(len(values))])


def write_fields_vtk(directory: Path, mesh: Mesh, state: TransportState, darcy: Optional[DarcySolution] = None) -> Path:
    """
    Legacy ASCII VTK of one transport state. Cell data: c and the centroid
    value of the flux; with a Darcy solution also its velocity and the P0
    head. Point data: the vertex-averaged head.
    """
    cell_data = {"c": [np.asarray(state.c, dtype=float)], "flux": [_planar(rt0_cell_centroid_values(mesh, state.vc))]}
    point_data = {}
    if darcy is not None:
        cell_data["velocity"] = [_planar(darcy.centroid_velocities)]
        cell_data["head"] = [np.asarray(darcy.phi, dtype=float)]
        point_data["head"] = darcy.head_p1()
    grid = meshio.Mesh(
        points=_planar(mesh.vertices),
        cells=[("triangle", np.asarray(mesh.cells))],
        cell_data=cell_data,
        point_data=point_data,
    )

    def write(tmp: Path):
        meshio.vtk.write(tmp, grid, fmt_version=VTK_VERSION, binary=False)

    return _atomic_write(Path(directory) / step_name("fields", state.n, "vtk"), write)


def write_ledger_csv(directory: Path, rows: Sequence[LedgerRow]) -> Path:
    return _write_csv(Path(directory) / "ledger.csv", LEDGER_HEADER, [tuple(r) for r in rows])


def write_convergence_csv(path: Path, table: ConvergenceTable) -> Path:
    return _write_csv(path, table.header, table.as_records(), index_columns=0)


def write_report(
    directory: Path,
    config_lines: List[str],
    summary: Dict[str, float],
    timings: Dict[str, float],
    extra: Optional[Dict[str, object]] = None,
) -> Path:
    """report.txt: the resolved configuration first, then results behind comment markers"""
    lines = ["# resolved configuration"] + list(config_lines)
    lines.append("")
    lines.append("# summary")
    lines += [f"# {k} = {_fmt(v) if isinstance(v, float) else v}" for k, v in summary.items()]
    if extra:
        lines += [f"# {k} = {v}" for k, v in extra.items()]
    lines.append("")
    lines.append("# timings (s)")
    lines += [f"# {k} = {v:.3f}" for k, v in timings.items()]
    return atomic_write_text(Path(directory) / "report.txt", "\n".join(lines) + "\n")


def ensure_directory(directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"Output directory {directory} is not writable")
    return directory
