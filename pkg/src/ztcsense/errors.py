"""Exception types shared across the package."""


class ZtcSenseError(Exception):
    """Base class for all package errors."""


class NetlistSyntaxError(ZtcSenseError):
    """Malformed netlist statement; carries the source location."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class NetlistSemanticError(ZtcSenseError):
    """Structurally valid netlist that violates a circuit rule."""


class RangeError(ZtcSenseError):
    """Argument outside the supported window (e.g. temperature)."""


class ConvergenceError(ZtcSenseError):
    """Newton iteration failed after all homotopy fallbacks."""

    def __init__(self, iterations: int, residual: float, context: str = ""):
        detail = f"no convergence after {iterations} iterations, residual {residual:.3e}"
        if context:
            detail += f" ({context})"
        super().__init__(detail)
        self.iterations = iterations
        self.residual = residual


class SingularMatrixError(ZtcSenseError):
    """Linearized system has no unique solution."""


class StepSizeError(ZtcSenseError):
    """Transient step too coarse for the shortest source segment."""


class NoZtcError(ZtcSenseError):
    """Drain-current spread is monotone over the sweep; no ZTC crossing."""


class TopologyError(ZtcSenseError):
    """Expected sensor structure (device/node/probe) is missing."""


class CalibrationError(ZtcSenseError):
    """No bias pair met the flatness bound; carries the best attempt."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class FaultSpecError(ZtcSenseError):
    """Fault description violates its own invariants."""


class ProbeError(ZtcSenseError):
    """A required probe is absent from the solved result."""


class DomainError(ZtcSenseError):
    """Metric evaluated outside its mathematical domain."""
