"""Exception hierarchy shared by the services."""
from typing import Any, Dict, Optional


class PencilError(Exception):
    """Base class for every error raised by the library."""

    module = 'core'

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        """Payload written by the CLI when a command fails."""
        return {
            'module': self.module,
            'error': type(self).__name__,
            'message': str(self),
            'details': {key: _plain(value) for key, value in self.details.items()},
        }


class DomainError(PencilError, ValueError):
    """An argument lies outside the domain of the operation."""

    module = 'meshfun'


class PreconditionError(PencilError, ValueError):
    """A documented precondition of an operation does not hold."""


class AssemblyError(PencilError):
    """The pencil cannot be assembled from the given coefficients."""

    module = 'assembly'


class WeightError(PencilError):
    """The weight does not give a positive definite mass matrix."""

    module = 'eigensolver'


class SpectrumError(PencilError):
    """The computed spectrum contradicts simplicity or the shift contract."""

    module = 'eigensolver'


class ConvergenceError(PencilError):
    """An iteration did not reach its tolerance."""

    module = 'eigensolver'

    def __init__(self, message: str, residual: Optional[float] = None, **details: Any):
        super().__init__(message, residual=residual, **details)
        self.residual = residual


class ConjugatePointError(PencilError):
    """Y1 reached zero while integrating the fundamental system."""

    module = 'transform'


class TransformError(PencilError):
    """The potential-elimination transform cannot be completed."""

    module = 'transform'


class ConfigError(PencilError):
    """A problem file could not be parsed or validated."""

    module = 'cli'

    def __init__(self, message: str, line: Optional[int] = None,
                 field: Optional[str] = None):
        super().__init__(message, line=line, field=field)
        self.line = line
        self.field = field

    def __str__(self) -> str:
        location = []
        if self.line is not None:
            location.append(f"line {self.line}")
        if self.field:
            location.append(f"field '{self.field}'")
        prefix = f"{', '.join(location)}: " if location else ''
        return f"{prefix}{self.args[0]}"


def _plain(value: Any) -> Any:
    """Convert numpy scalars so payloads stay JSON-serializable."""
    if hasattr(value, 'tolist'):
        return value.tolist()
    return value
