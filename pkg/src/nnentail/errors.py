"""Exception types shared across the package."""


class ParseError(ValueError):
    """A malformed input line or record; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemeViolationError(ValueError):
    """A label outside the dataset's declared label scheme."""


class InsufficientExamplesError(ValueError):
    """A class has fewer instances than the requested k."""


class MalformedItemError(ValueError):
    """A task item whose offsets or fields contradict its own text."""


class IncompletePredictionsError(ValueError):
    """A back-conversion was given fewer predictions than the item needs."""


class ConfigError(ValueError):
    """An invalid or inconsistent run configuration."""


class NumericError(ArithmeticError):
    """A non-finite value reached a computation that requires finite input."""
