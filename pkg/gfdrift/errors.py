"""
Structured errors for gfdrift.

Every error carries an optional ``context`` mapping (particle index, step,
offending value, ...) that is rendered into its message, so a failure in a
long flow or training run can be located without a debugger.
"""

from __future__ import annotations

from typing import Any, Mapping, Optional


class GfdriftError(Exception):
    """Base class for all gfdrift errors."""

    def __init__(self, message: str, context: Optional[Mapping[str, Any]] = None):
        self.message = message
        self.context = dict(context or {})
        super().__init__(self._render())

    def _render(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ConfigurationError(GfdriftError):
    """A spec or run config is malformed or inconsistent."""


class UnsupportedConfigurationError(ConfigurationError):
    """A well-formed config asks for something this engine does not do."""


class InvalidInputError(GfdriftError):
    """Empty ensembles, wrong shapes, mismatched dimensions."""


class ConstraintViolationError(GfdriftError):
    """A point violates its geometry (e.g. off the unit sphere)."""


class DegenerateRetractionError(GfdriftError):
    """A spherical retraction would divide by a vanishing norm."""


class UndefinedGradientError(GfdriftError):
    """A kernel gradient was requested where the kernel is not C¹."""


class NumericalError(GfdriftError):
    """Non-finite values appeared during a flow or a training run."""


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, (ConfigurationError, InvalidInputError, ConstraintViolationError)):
        return EXIT_USAGE
    if isinstance(exc, GfdriftError):
        return EXIT_FAILURE
    return EXIT_FAILURE
