"""Exception hierarchy shared by every module."""


class SurvForestError(Exception):
    """Base class for all package errors."""


class ParseError(SurvForestError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(SurvForestError):
    """Input is well formed but inconsistent with what the operation needs."""


class DomainError(SurvForestError):
    """Input lies outside the mathematical domain of the operation."""


class ConfigError(SurvForestError):
    pass


class ForestFormatError(SurvForestError):
    """Serialized forest is truncated, malformed, or of another schema version."""
