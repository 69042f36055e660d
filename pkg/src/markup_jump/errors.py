"""Exception types raised across the package."""


class MarkupError(Exception):
    """Base class for all package errors."""


class ConfigError(MarkupError, ValueError):
    """Invalid parameter set or configuration document."""


class NonFinitePath(MarkupError):
    """A simulated state became NaN or infinite (usually dt too large)."""

    def __init__(self, path_index: int, step: int | None = None):
        self.path_index = path_index
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"path {path_index} became non-finite{where}")


class NoContraction(MarkupError):
    """Picard distances grew for three consecutive iterations."""


class NonPositiveState(MarkupError, ValueError):
    """A state value was <= 0 where a log or a square root weight is needed."""


class ZeroState(MarkupError, ZeroDivisionError):
    """x = 0 was passed to a lambda-weighted term that divides by the state."""


class SingularDenominator(MarkupError, ZeroDivisionError):
    """The closed-form control has a vanishing denominator."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"{message} (index {index})")


class InsufficientData(MarkupError, ValueError):
    pass


class ZeroGap(MarkupError, ValueError):
    pass


class ConstantSeries(MarkupError, ValueError):
    pass


class SizeOutOfRange(MarkupError, ValueError):
    pass


class ParseError(MarkupError, ValueError):
    def __init__(self, row: int, message: str = ""):
        self.row = row
        super().__init__(f"row {row}: {message}" if message else f"row {row}")


class DuplicateDate(MarkupError, ValueError):
    pass


class EmptyFile(MarkupError, ValueError):
    pass


class NoOverlap(MarkupError, ValueError):
    pass


class BaseDateMissing(MarkupError, KeyError):
    pass


class NonPositiveBase(MarkupError, ValueError):
    pass
