"""
Typed error hierarchy for the formation sensing system.
Every numeric kernel raises one of these; the CLI maps them to exit codes.
"""

from typing import Any, Dict, List, Optional


class SimulationError(Exception):
    """Base class for all simulation errors."""


class InvalidArgumentError(SimulationError, ValueError):
    """Argument outside the operation's domain (empty input, negative sd, bad shape)."""


class InsufficientDataError(SimulationError, ValueError):
    """Too few links or samples to form a measurement."""


class SingularMatrixError(SimulationError, ArithmeticError):
    """Matrix is not SPD, or singular within tolerance."""


class DegenerateGeometryError(SimulationError, ArithmeticError):
    """Geometry makes a direction or design matrix undefined."""


class DegenerateStateError(SimulationError, ArithmeticError):
    """UAV state cannot be converted (e.g. zero airspeed)."""


class SingularAttitudeError(SimulationError, ArithmeticError):
    """Bank angle denominator vanishes."""


class HeadingUndefinedError(SimulationError, ArithmeticError):
    """Leader at the world origin: formation heading is undefined."""


class AmbiguityError(SimulationError, ValueError):
    """Range or range rate outside the unambiguous region of the pattern."""


class NoPeakError(SimulationError, ArithmeticError):
    """Channel grid carries no energy."""


class UnobservableParameterError(SimulationError, ArithmeticError):
    """Per-link Fisher information is singular."""


class UnobservableGeometryError(SimulationError, ArithmeticError):
    """Formation-level Fisher information is singular."""


class NotReadyError(SimulationError, RuntimeError):
    """Replay buffer does not yet hold a full batch."""


class TrainingDivergenceError(SimulationError, RuntimeError):
    """A network weight became non-finite during training."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigValidationError(SimulationError, ValueError):
    """Scenario configuration failed validation; lists every violated field."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        joined = "; ".join(self.errors)
        super().__init__(f"{len(self.errors)} config violation(s): {joined}")


class NonFiniteEvaluationError(SimulationError, FloatingPointError):
    """A function under finite differencing returned a non-finite value."""
