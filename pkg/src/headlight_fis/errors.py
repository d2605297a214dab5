"""Exception hierarchy shared by every module of the package."""


class HeadlightError(Exception):
    """Base class for all package errors."""


class DomainError(HeadlightError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(HeadlightError, ValueError):
    """A rule base, controller config or scenario violates an invariant."""


class NoRuleFiredError(HeadlightError):
    """Every rule fired at zero strength, so there is nothing to defuzzify."""

    def __init__(self, inputs=None):
        self.inputs = dict(inputs) if inputs else {}
        detail = ", ".join(f"{k}={v!r}" for k, v in self.inputs.items())
        super().__init__(f"no rule fired for inputs ({detail})" if detail else "no rule fired")


class CalibrationError(HeadlightError):
    """Calibration could not bring every anchor within tolerance."""

    def __init__(self, message, residuals=None):
        self.residuals = list(residuals) if residuals is not None else []
        super().__init__(message)


class ParseError(HeadlightError, ValueError):
    """A CSV trace, PGM image or JSON document could not be parsed."""
