"""Exception hierarchy shared by every module."""


class LrpError(Exception):
    """Base class for all package errors."""


class InfeasibleInstance(LrpError):
    pass


class MaskedAction(LrpError):
    pass


class MaskInvariantError(LrpError):
    """A non-finished row of the batch mask has every entry masked."""


class InfeasiblePlan(LrpError):
    pass


class MalformedTrace(LrpError):
    pass


class DimensionMismatch(LrpError):
    pass


class ShapeMismatch(LrpError):
    pass


class AllMasked(LrpError):
    pass


class SingularFactor(LrpError):
    pass


class TooLarge(LrpError):
    pass


class UnsupportedDialect(LrpError):
    pass


class Divergence(LrpError):
    pass


class ParseError(LrpError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)
