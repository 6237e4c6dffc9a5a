import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Union

from aquitrans.analysis.convergence import ConvergenceTable
from aquitrans.analysis.norms import check_majorization
from aquitrans.physics.darcy import MANUFACTURED_CASES, DarcySolution, darcy_convergence_study, solve_darcy
from aquitrans.physics.transport import LedgerRow, TransportBoundary, TransportState, run
from aquitrans.scenario_io.config import ScenarioConfig
from aquitrans.scenario_io.output import (
    ensure_directory,
    write_concentration_csv,
    write_convergence_csv,
    write_fields_vtk,
    write_flux_csv,
    write_ledger_csv,
    write_report,
)
from aquitrans.utils.logging import setup_logging


class Phase(Enum):
    MESH = "mesh"
    DARCY = "darcy"
    TRANSPORT = "transport"
    ANALYSIS = "analysis"
    OUTPUT = "output"
    STUDY = "study"


@dataclass
class RunReport:
    ledger_rows: List[LedgerRow]
    summary: Dict[str, float]
    negativity: List[float]
    timings: Dict[str, float]
    output_dir: Path
    files: List[Path] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.ledger_rows)


class ScenarioRunner:
    def __init__(self, config: ScenarioConfig, log_dir: Optional[Union[str, Path]] = "logs", verbose: bool = False):
        """Set up logging and the output directory for one scenario"""
        self.config = config
        self.verbose = verbose
        self.output_dir = ensure_directory(config.output.directory)

        self.log_dir = None if log_dir is None else Path(log_dir)
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        level = logging.DEBUG if verbose else None
        self.logger = setup_logging(self.log_dir, timestamp, "scenario", level=level)
        self.timings: Dict[str, float] = {}

    @contextmanager
    def _phase(self, phase: Phase):
        start = time.perf_counter()
        self.logger.info(f"Starting {phase.value} phase")
        try:
            yield
        finally:
            self.timings[phase.value] = self.timings.get(phase.value, 0.0) + time.perf_counter() - start

    def _write_state(self, mesh, state: TransportState, darcy: DarcySolution, files: List[Path]) -> None:
        formats = self.config.output.formats
        if "csv" in formats:
            files.append(write_concentration_csv(self.output_dir, mesh, state))
            files.append(write_flux_csv(self.output_dir, state))
        if "vtk" in formats:
            files.append(write_fields_vtk(self.output_dir, mesh, state, darcy))

    def run(self) -> RunReport:
        """Darcy solve, transport run and every output file of the scenario"""
        config = self.config
        self.logger.info(f"Running scenario {config.source or '<in-memory>'} into {self.output_dir}")
        try:
            with self._phase(Phase.MESH):
                mesh = config.mesh.build()
                metrics = mesh.metrics()
                self.logger.info(
                    f"Mesh: {mesh.n_cells} cells, {mesh.n_edges} edges, h={metrics['h']:.4g}, "
                    f"quasi-uniformity {metrics['quasi_uniformity']:.3f}"
                )

            with self._phase(Phase.DARCY):
                problem = config.darcy.problem(mesh)
                darcy = solve_darcy(problem)

            params = config.transport.params(mesh, g=problem.source)
            tau = config.time.timestep(mesh.h)
            cadence = config.output.cadence
            files: List[Path] = []

            def on_step(state: TransportState, row: LedgerRow) -> None:
                if state.n % cadence == 0:
                    self._write_state(mesh, state, darcy, files)

            with self._phase(Phase.TRANSPORT):
                result = run(
                    params,
                    darcy,
                    tau,
                    config.time.T_final,
                    inverse_constant=config.transport.inverse_constant,
                    cfl=config.time.cfl,
                    on_step=on_step,
                )

            with self._phase(Phase.ANALYSIS):
                dirichlet = params.chi is TransportBoundary.DIRICHLET
                max_ratio = check_majorization(mesh, result.trajectory, dirichlet)

            with self._phase(Phase.OUTPUT):
                self._write_state(mesh, result.trajectory[0], darcy, files)
                if result.final.n % cadence != 0:
                    self._write_state(mesh, result.final, darcy, files)
                files.append(write_ledger_csv(self.output_dir, result.ledger.rows))

            # Report timings include the output phase
            summary = result.summary()
            extra = {
                "tau": repr(result.tau),
                "n_steps": result.n_steps,
                "vmax": repr(result.vmax),
                "max_mass_balance_defect": repr(max(result.mass_defects, default=0.0)),
                "max_majorization_ratio": "absent" if max_ratio is None else repr(max_ratio),
            }
            files.append(write_report(self.output_dir, config.echo_lines(), summary, self.timings, extra))

            self.logger.info(f"Run finished: {result.n_steps} steps, {len(files)} files written to {self.output_dir}")
            return RunReport(
                ledger_rows=list(result.ledger.rows),
                summary=summary,
                negativity=list(result.ledger.negativity),
                timings=dict(self.timings),
                output_dir=self.output_dir,
                files=files,
            )

        except Exception as e:
            self.logger.error(f"Error running scenario: {str(e)}")
            raise

    def darcy_study(self) -> ConvergenceTable:
        """Manufactured-solution convergence study written to darcy_study.csv"""
        config = self.config
        try:
            with self._phase(Phase.STUDY):
                case = MANUFACTURED_CASES[config.study.case](kappa=config.darcy.kappa_matrix)
                table = darcy_convergence_study(case, config.study.levels, config.mesh.domain)

            with self._phase(Phase.OUTPUT):
                path = write_convergence_csv(self.output_dir / "darcy_study.csv", table)

            summary = {f"last_order_{name}": table.last_order(name) for name in table.norms}
            extra = {f"flag_{i}": flag for i, flag in enumerate(table.flags)}
            write_report(self.output_dir, config.echo_lines(), summary, self.timings, extra)

            self.logger.info(f"Darcy study written to {path}")
            return table

        except Exception as e:
            self.logger.error(f"Error in Darcy study: {str(e)}")
            raise


def cmd_run(config: ScenarioConfig, log_dir: Optional[Union[str, Path]] = "logs", verbose: bool = False) -> RunReport:
    return ScenarioRunner(config, log_dir=log_dir, verbose=verbose).run()


def cmd_darcy_study(
    config: ScenarioConfig, log_dir: Optional[Union[str, Path]] = "logs", verbose: bool = False
) -> ConvergenceTable:
    return ScenarioRunner(config, log_dir=log_dir, verbose=verbose).darcy_study()


if __name__ == "__main__":
    from aquitrans.scenario_io.config import parse_config_text

    demo = parse_config_text("mesh.n = 8\ntime.tau = 0.01\ntime.T_final = 0.1\noutput.directory = demo_output\n")

    try:
        report = cmd_run(demo)
        print(f"Successfully ran {report.n_steps} steps into {report.output_dir}")
    except Exception as e:
        print(f"Error running scenario: {str(e)}")
