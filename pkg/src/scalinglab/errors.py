"""Exception types shared across the laboratory."""


class ScalingLabError(Exception):
    """Base class for all errors raised by scalinglab."""


class DomainError(ScalingLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class DivergenceError(ScalingLabError, ArithmeticError):
    """A numerical trajectory produced a non-finite value."""

    def __init__(self, time: float, what: str = "state"):
        self.time = float(time)
        super().__init__(f"non-finite {what} at time {self.time:.6g}")


class CoverageError(ScalingLabError, ValueError):
    """A reference trajectory does not reach the requested time."""


class PredictionRangeError(ScalingLabError, ValueError):
    """A prediction needs data outside the measured range."""

    def __init__(self, message: str, required: float):
        self.required = float(required)
        super().__init__(message)


class IdxFormatError(ScalingLabError, ValueError):
    """Base class for malformed IDX files."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedPayloadError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class ConfigError(ScalingLabError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message if key is None else f"{key}: {message}")
