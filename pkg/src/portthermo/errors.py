"""Exception types shared across the package."""

from __future__ import annotations


class PortThermoError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PortThermoError):
    """Evaluation left an admissible domain (math domain or declared physical domain)."""


class GaugeError(PortThermoError):
    """A co-extensive ratio was requested in a gauge whose denominator vanishes."""


class EvalError(PortThermoError):
    """Unbound variable or malformed evaluation environment."""


class ParseError(PortThermoError):
    """Syntax error with a 1-based byte offset and an expected-token description."""

    def __init__(self, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        super().__init__(f"syntax error at offset {offset}: expected {expected}")


class CompositionError(PortThermoError):
    """A system interconnection violated its preconditions."""


class ConservationError(PortThermoError):
    """A claimed conserved quantity failed its bracket check."""


class ValidationError(PortThermoError):
    """A constructed system failed its structural checks."""

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)


class ConfigError(PortThermoError):
    """A scenario configuration file is unreadable or inconsistent."""


class DomainExit(PortThermoError):
    """Integration left the admissible domain; carries the partial trajectory."""

    def __init__(self, trajectory, t_last: float, reason: str):
        self.trajectory = trajectory
        self.t_last = t_last
        self.reason = reason
        super().__init__(f"domain exit at t={t_last:.6g}: {reason}")


class StepSizeUnderflow(PortThermoError):
    """Adaptive integration could not meet tolerances with a representable step."""
