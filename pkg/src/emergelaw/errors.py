"""Exception types shared across the package."""


class EmergelawError(Exception):
    """Base class for all package errors."""


class ValidationError(EmergelawError, ValueError):
    """Input data or configuration violates a documented invariant."""


class ObservationParseError(ValidationError):
    """An observation file line could not be parsed or validated."""

    def __init__(self, path, line_number: int, reason: str):
        self.path = str(path)
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"{path}:{line_number}: {reason}")


class IdentifiabilityError(EmergelawError):
    """The fit cannot pin down an emergence point inside the observable range."""


class TemperatureSelectionError(EmergelawError):
    """No sweep temperature produced a posterior mode near the MLE."""
