"""
Command line: `aquitrans run <config>`, `aquitrans darcy-study <config>`,
`aquitrans verify [--filter SUITE] [--seed N]`.

Exit codes: 0 success, 2 usage, 3 configuration error, 4 solver error,
5 verification failure.
"""
import argparse
import logging
import sys
from datetime import datetime
from typing import List, Optional

from aquitrans.errors import AquitransError, ConfigError, MeshError, SolverError, VerificationError
from aquitrans.scenario_io.config import parse_config
from aquitrans.utils.logging import setup_logging
from aquitrans.verification import SUITES, cmd_verify
from aquitrans.workflow import cmd_darcy_study, cmd_run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_SOLVER = 4
EXIT_VERIFY = 5

logger = logging.getLogger(__name__)


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="aquitrans", description="Mixed finite element Darcy flow and reactive transport.")
    parser.add_argument("--output-dir", default=None, help="Override output.directory from the scenario file.")
    parser.add_argument("--log-dir", default="logs", help="Directory for run log files (default: logs).")
    parser.add_argument("--verbose", action="store_true", help="Log per-step details.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Solve Darcy, run transport and write the outputs.")
    run_parser.add_argument("config", help="Scenario file.")

    study_parser = sub.add_parser("darcy-study", help="Manufactured-solution convergence study for Darcy.")
    study_parser.add_argument("config", help="Scenario file.")

    verify_parser = sub.add_parser("verify", help="Run the property suites.")
    verify_parser.add_argument("--filter", choices=sorted(SUITES), default=None, help="Run a single suite.")
    verify_parser.add_argument("--seed", type=int, default=0, help="Seed for randomized checks.")
    return parser.parse_args(argv)


def _load(args: argparse.Namespace):
    config = parse_config(args.config)
    if args.output_dir is not None:
        config = config.with_output_directory(args.output_dir)
    return config


def main(argv: Optional[List[str]] = None) -> int:
    args = parse_args(argv)
    try:
        if args.command == "verify":
            setup_logging(None, datetime.now().strftime("%Y%m%d_%H%M%S"), "verify")
            results = cmd_verify(args.filter, args.seed)
            for result in results:
                status = "PASS" if result.passed else "FAIL"
                print(f"{status} {result.name}: {result.checks} checks in {result.seconds:.2f}s - {result.message}")
            return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY

        config = _load(args)
        if args.command == "run":
            report = cmd_run(config, log_dir=args.log_dir, verbose=args.verbose)
            print(f"{report.n_steps} steps written to {report.output_dir}")
        else:
            table = cmd_darcy_study(config, log_dir=args.log_dir, verbose=args.verbose)
            orders = ", ".join(f"{name}={table.last_order(name):.3f}" for name in table.norms)
            print(f"Darcy study over {len(table)} meshes, last orders: {orders}")
        return EXIT_OK

    except (ConfigError, MeshError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        print(f"Solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except VerificationError as e:
        print(f"Verification error: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (AquitransError, ValueError) as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"Output error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
