"""
Exception hierarchy shared by the library and the command line.

The CLI maps these onto exit codes, so anything raised past the
orchestration layer should be one of them.
"""
from typing import Optional


class AquitransError(Exception):
    """Base class for all errors raised by aquitrans"""


class ConfigError(AquitransError, ValueError):
    """Scenario configuration could not be parsed or validated"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if key is not None:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


class MeshError(AquitransError, ValueError):
    """Malformed, non-conforming or degenerate mesh"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class AssemblyError(AquitransError, ValueError):
    """Invalid coefficient data handed to an assembly routine"""


class SolverError(AquitransError, RuntimeError):
    """A linear solve failed or produced non-finite values"""


class DarcySolveError(SolverError):
    pass


class TransportStepError(SolverError):
    def __init__(
        self,
        message: str,
        tau: Optional[float] = None,
        threshold: Optional[float] = None,
        step: Optional[int] = None,
    ):
        self.tau = tau
        self.threshold = threshold
        self.step = step
        details = []
        if step is not None:
            details.append(f"step={step}")
        if tau is not None:
            details.append(f"tau={tau:.6g}")
        if threshold is not None:
            details.append(f"threshold={threshold:.6g}")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class StepRefusedError(TransportStepError):
    """Raised by the CFL / solvability guard before any factorization"""


class VerificationError(AquitransError):
    pass
