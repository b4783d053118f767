"""Exception hierarchy. Everything raised on purpose derives from PSMError."""
from __future__ import annotations


class PSMError(Exception):
    """Base class for errors raised by trafficpsm."""


class ConfigError(PSMError, ValueError):
    """Invalid study, evaluation or scenario configuration."""


class SchemaError(PSMError, ValueError):
    def __init__(self, column: str, path=None):
        self.column = column
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing column {column!r}{where}")


class ParseError(PSMError, ValueError):
    def __init__(self, row: int, column: str, value: str):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}: cannot parse {column}={value!r}")


class EmptyGroupError(PSMError, ValueError):
    """Study has no treated or no control observations."""


class ShapeError(PSMError, ValueError):
    """Covariate width does not match the fitted model."""


class DegenerateTrainingError(PSMError, ValueError):
    """Training labels contain a single class."""


class DegenerateLeafError(PSMError, ArithmeticError):
    """Leaf with zero hessian mass and zero regularisation."""


class SeparationError(PSMError, ArithmeticError):
    """Probit likelihood is unbounded (perfect or quasi separation)."""


class RankError(PSMError, ArithmeticError):
    """Singular Hessian in probit fitting."""


class PoolExhaustedError(PSMError):
    """Matching without replacement ran out of controls."""


class CaliperError(PSMError):
    """A treated observation has no control within the caliper."""


class MissingOutcomeError(PSMError, ValueError):
    def __init__(self, index: int, label: str = ""):
        self.index = index
        super().__init__(f"matched observation {index}{' (' + label + ')' if label else ''} has no outcome")


class ModelFitError(PSMError):
    """Propensity model failed; carries the method and the original error."""

    def __init__(self, method: str, cause: Exception):
        self.method = method
        self.cause = cause
        self.m = None
        self.trace = []
        super().__init__(f"{method}: {cause}")


class InsufficientControlPoolError(PSMError):
    """No control-pool size up to max_weeks gave common support and balance."""

    def __init__(self, message: str, trace=()):
        self.trace = list(trace)
        super().__init__(message)
