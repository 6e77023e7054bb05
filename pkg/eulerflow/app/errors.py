# eulerflow/app/errors.py

from __future__ import annotations

from typing import Any, Tuple


class EulerFlowError(Exception):
    """Base class for every error raised by the library."""


# ──────────────────────────
# Expressions
# ──────────────────────────
class ExprError(EulerFlowError, ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, position: int, text: str = ""):
        self.name = name
        super().__init__(f"unknown identifier '{name}'", position, text)


class ArityError(ExprSyntaxError):
    pass


class ExprEvaluationError(ExprError):
    """Raised by strict evaluation; ``node`` is the offending sub-expression."""

    def __init__(self, message: str, node: Any):
        self.node = node
        super().__init__(f"{message} in '{node}'")


# ──────────────────────────
# Numerics
# ──────────────────────────
class NearSingularError(EulerFlowError):
    def __init__(self, message: str, at: Tuple[float, ...] | None = None):
        self.at = at
        super().__init__(message)


class NoConvergenceError(EulerFlowError):
    def __init__(self, message: str, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")


class QuadratureError(EulerFlowError):
    pass


class DimensionError(EulerFlowError, ValueError):
    pass


# ──────────────────────────
# Families / configuration
# ──────────────────────────
class InvalidParameters(EulerFlowError, ValueError):
    pass


class AntiCRViolation(EulerFlowError):
    def __init__(self, residual: float, location: Tuple[float, float]):
        self.residual = residual
        self.location = location
        super().__init__(
            f"map is not anti-CR: residual {residual:.3e} at "
            f"z=({location[0]:.6g}, {location[1]:.6g})"
        )


class ConfigError(EulerFlowError):
    pass
