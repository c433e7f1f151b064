"""Exception hierarchy.

Input problems derive from :class:`ValidationError` (the CLI maps them to
exit status 2); convergence failures derive from :class:`NotConverged`
(exit status 3).
"""

from __future__ import annotations


class GagBiasError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GagBiasError, ValueError):
    """Invalid input data or parameters."""


class NegativeCell(ValidationError):
    def __init__(self, cell: str, value: float):
        self.cell = cell
        self.value = value
        super().__init__(f"negative count {value!r} in cell {cell}")


class NonFiniteCell(ValidationError):
    def __init__(self, cell: str, value: float):
        self.cell = cell
        self.value = value
        super().__init__(f"non-finite count {value!r} in cell {cell}")


class EmptyTable(ValidationError):
    def __init__(self, message: str = "table total is zero; nothing to fit"):
        super().__init__(message)


class InvalidCell(ValidationError):
    """A (mode, crime, status, spouse) combination outside the 30-cell mask."""


class InvalidParameters(ValidationError):
    """Model parameters outside [0, 1] or off the simplex."""


class EmptySample(ValidationError):
    """Shrinkage requested for a count vector with zero total."""


class DegenerateStrata(ValidationError):
    """Mantel-Haenszel sums or stratum margins are zero."""


class NoAdmissibleRoot(GagBiasError):
    """The Breslow-Day expected-count quadratic has no root in range."""


class ResultSerializationError(GagBiasError, ValueError):
    """A result payload contains a NaN and cannot be serialized."""


class CsvError(ValidationError):
    """Malformed CSV input. ``lines`` holds the 1-based line numbers involved."""

    def __init__(self, message: str, lines: tuple[int, ...] = ()):
        self.lines = tuple(lines)
        if lines:
            where = ", ".join(str(n) for n in lines)
            message = f"line {where}: {message}"
        super().__init__(message)


class MissingCell(CsvError):
    pass


class DuplicateCell(CsvError):
    pass


class BadEnum(CsvError):
    pass


class BadNumber(CsvError):
    pass


class BadHeader(CsvError):
    pass


class NotConverged(GagBiasError):
    """Iteration limit reached before the convergence criterion was met.

    ``result`` holds the last iterate as a FitResult (``converged=False``).
    """

    def __init__(self, result, message: str | None = None):
        self.result = result
        self.params = result.params
        self.iterations = result.iterations
        if message is None:
            message = (
                f"no convergence after {result.iterations} iterations "
                f"(last change {result.metric:.3g})"
            )
        super().__init__(message)

    def __reduce__(self):
        return (self.__class__, (self.result, str(self)))


class ReplicateNotConverged(NotConverged):
    """A jackknife replicate failed to converge."""

    def __init__(self, index: int, label: str, cause: NotConverged):
        self.index = index
        self.label = label
        self.cause = cause
        super().__init__(
            cause.result,
            f"jackknife replicate {index} (unit {label!r} deleted): {cause}",
        )

    def __reduce__(self):
        return (self.__class__, (self.index, self.label, self.cause))


class IndexOutOfRange(ValidationError, IndexError):
    """Sampling-unit index outside the series."""
