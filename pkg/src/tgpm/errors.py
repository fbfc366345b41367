"""Exception and warning types raised across the package."""


class TgpmError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(TgpmError, ValueError):
    """A matrix failed the Cholesky pivot test."""


class InsufficientData(TgpmError, ValueError):
    """Too few observations for the requested computation."""


class DimensionMismatch(TgpmError, ValueError):
    pass


class NonFiniteDensity(TgpmError, ValueError):
    """A log-density evaluation inside a finite-difference stencil was not finite."""


class DegenerateDenominator(TgpmError, ValueError):
    """``1' Omega 1`` vanished, so minimum-variance weights are undefined."""


class DegenerateVariance(TgpmError, ValueError):
    pass


class KindMismatch(TgpmError, ValueError):
    pass


class Bankruptcy(TgpmError, ValueError):
    """A period return of -100% or worse wiped out the wealth curve."""


class ParseError(TgpmError, ValueError):
    def __init__(self, message, *, path=None, row=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.row = row
        self.column = column


class NonPositivePrice(ParseError):
    pass


class UnsortedDates(ParseError):
    pass


class UnrecognizedLayout(ParseError):
    pass


class EmptyRegion(UserWarning):
    """No observation fell inside the requested tail region."""
