"""
Error Handler Module for Lorenz Lab

Defines the exception hierarchy raised by the numerical modules and translates
exceptions into short operator-facing messages, severities and process exit
codes. Every domain error carries a ``diagnostics`` dict that the CLI writes
into the error artifact.

Usage:
    from error_handler import translate_exception, exit_code_for, NotRenormalizable

    try:
        data = detect_monotone(f, 1, 3)
    except Exception as e:
        message, severity = translate_exception(e, context="detect")
        code = exit_code_for(e)
"""

import json
from enum import Enum
from typing import Any, Dict, Optional, Tuple


class ErrorSeverity(Enum):
    """Error severity levels for logs and error artifacts"""
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"
    CRITICAL = "critical"


class LorenzLabError(Exception):
    """Base class for all errors raised by the lab."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})


class LorenzDomainError(LorenzLabError, ValueError):
    """Point or parameter outside the domain of an operation (e.g. x = c)."""


class DegenerateIntervalError(LorenzDomainError):
    """Zoom or rescaling requested on an interval of zero length."""


class DegenerateMapError(LorenzDomainError):
    """Map data makes a formula undefined (e.g. c1- = 0)."""


class RepresentationError(LorenzLabError):
    """Nonlinearity samples are not finite or an evaluation is not monotone."""


class CriticalCollision(LorenzLabError):
    """An orbit came within tolerance of the critical point."""

    def __init__(self, step: int, point: float, side: str = "", message: Optional[str] = None):
        super().__init__(
            message or f"orbit hits the critical point at step {step}",
            {"step": step, "point": point, "side": side},
        )
        self.step = step
        self.point = point
        self.side = side


class NotRenormalizable(LorenzLabError):
    """No window passes verification for the requested monotone type."""


class RenormalizationInconsistency(LorenzLabError):
    """Formula-built renormalization disagrees with the direct return map."""


class CombinatoricsLost(LorenzLabError):
    """Detection failed for a prescribed type during iteration."""


class NoConvergence(LorenzLabError):
    """Fixed-point search exhausted its budget."""


class IslandSearchFailure(LorenzLabError):
    """No parameter cell survived a level of the nested island search."""

    def __init__(self, level: int, message: Optional[str] = None, diagnostics: Optional[Dict[str, Any]] = None):
        details = {"level": level}
        details.update(diagnostics or {})
        super().__init__(message or f"no renormalizable cell survives at level {level}", details)
        self.level = level


class InsufficientData(LorenzLabError):
    """Too few levels or samples for an estimator."""


class NiceIntervalError(LorenzLabError):
    """A window's boundary orbit re-enters the window."""


class UsageError(LorenzLabError):
    """Malformed job spec or command-line usage."""


def translate_exception(exception: Exception, context: str = "") -> Tuple[str, ErrorSeverity]:
    """
    Translate an exception to a one-line operator message.

    Args:
        exception: The caught exception
        context: Additional context about where the error occurred

    Returns:
        Tuple of (message, severity_level)
    """
    prefix = f"[{context}] " if context else ""

    if isinstance(exception, UsageError):
        return f"{prefix}Invalid job: {exception}", ErrorSeverity.ERROR

    if isinstance(exception, NotRenormalizable):
        failed = exception.diagnostics.get("first_failed_invariant", "unknown")
        return (
            f"{prefix}Map is not renormalizable for the requested type "
            f"(first failed check: {failed})",
            ErrorSeverity.WARNING,
        )

    if isinstance(exception, CriticalCollision):
        return (
            f"{prefix}Critical orbit collision at step {exception.step}; "
            f"perturb the map or reduce the depth",
            ErrorSeverity.WARNING,
        )

    if isinstance(exception, RenormalizationInconsistency):
        residual = exception.diagnostics.get("residual")
        return (
            f"{prefix}Renormalization formula disagrees with the return map "
            f"(residual {residual})",
            ErrorSeverity.CRITICAL,
        )

    if isinstance(exception, NoConvergence):
        trace = exception.diagnostics.get("trace") or []
        last = trace[-1] if trace else None
        return (
            f"{prefix}Fixed-point search did not converge "
            f"({len(trace)} iterations, last distance {last})",
            ErrorSeverity.ERROR,
        )

    if isinstance(exception, CombinatoricsLost):
        return f"{prefix}Combinatorics lost during iteration: {exception}", ErrorSeverity.ERROR

    if isinstance(exception, IslandSearchFailure):
        return f"{prefix}Island search failed at level {exception.level}", ErrorSeverity.ERROR

    if isinstance(exception, LorenzLabError):
        return f"{prefix}{type(exception).__name__}: {exception}", ErrorSeverity.ERROR

    if isinstance(exception, FileNotFoundError):
        return (
            f"{prefix}File not found: {getattr(exception, 'filename', 'unknown')}",
            ErrorSeverity.ERROR,
        )

    if isinstance(exception, PermissionError):
        return f"{prefix}Permission denied writing artifacts: {exception}", ErrorSeverity.ERROR

    if isinstance(exception, json.JSONDecodeError):
        return f"{prefix}Job spec is not valid JSON: {exception}", ErrorSeverity.ERROR

    if isinstance(exception, ValueError):
        return f"{prefix}Invalid value: {exception}", ErrorSeverity.ERROR

    return f"{prefix}Unexpected error: {type(exception).__name__}: {exception}", ErrorSeverity.CRITICAL


def exit_code_for(exception: Exception) -> int:
    """Process exit code: 2 for domain errors, 1 for usage and anything else."""
    if isinstance(exception, UsageError):
        return 1
    if isinstance(exception, LorenzLabError):
        return 2
    return 1


def error_payload(exception: Exception, context: str = "") -> Dict[str, Any]:
    """Serializable description of an exception for the error artifact."""
    message, severity = translate_exception(exception, context)
    diagnostics = getattr(exception, "diagnostics", {}) or {}
    return {
        "error": type(exception).__name__,
        "message": str(exception),
        "summary": message,
        "severity": severity.value,
        "exit_code": exit_code_for(exception),
        "diagnostics": _jsonable(diagnostics),
    }


def _jsonable(value: Any) -> Any:
    """Coerce numpy scalars/arrays and tuples in diagnostics to JSON types."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)
