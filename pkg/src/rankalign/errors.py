"""Exception types shared across the package."""


class RankAlignError(Exception):
    """Base class for every error raised by this package."""


class SchemaMismatchError(RankAlignError):
    """A tensor or weight head does not conform to the expected layer schema."""


class ValidationError(RankAlignError):
    """Input data violates a documented invariant or precondition."""


class FormatError(RankAlignError):
    """A file could not be parsed.

    Carries the offending location: ``line`` for text formats, ``offset``
    (byte position) for binary formats.
    """

    def __init__(self, message: str, *, path=None, line: int | None = None,
                 offset: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.offset = offset


class UndefinedStatisticError(RankAlignError):
    """A statistic is undefined for the given input (e.g. zero variance or a
    zero denominator)."""


class NumericalError(RankAlignError):
    """A numerical failure (NaN or infinity) occurred during optimization."""
