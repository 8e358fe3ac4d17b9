"""Exception types shared across the package."""


class CardiomixError(Exception):
    """Base class for all package errors."""


class UsageError(CardiomixError, ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class PgmParseError(CardiomixError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PgmLengthError(CardiomixError, ValueError):
    pass


class ManifestError(CardiomixError, ValueError):
    pass


class CheckpointFormatError(CardiomixError, ValueError):
    pass


class CheckpointIntegrityError(CardiomixError, ValueError):
    pass


class UnsupportedArchError(CardiomixError, ValueError):
    pass


class UndefinedMetricError(CardiomixError, ValueError):
    pass


class ConfigError(CardiomixError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
