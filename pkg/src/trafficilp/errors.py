"""Exception hierarchy.

Everything caused by bad input derives from :class:`InputError` (CLI exit 1);
broken internal invariants derive from :class:`InvariantError` (CLI exit 2).
"""


class TrafficILPError(Exception):
    pass


class InputError(TrafficILPError):
    pass


class InvariantError(TrafficILPError):
    pass


# -- ingest -----------------------------------------------------------------

class EmptyInput(InputError):
    pass


class MissingColumn(InputError):
    def __init__(self, column, logical=None):
        self.column = column
        self.logical = logical
        msg = f"missing required column {column!r}"
        if logical and logical != column:
            msg += f" (for field {logical!r})"
        super().__init__(msg)


class MalformedRow(InputError):
    """A single row failed validation."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class ParseAbort(MalformedRow):
    """Strict-mode rejection of a row."""


class DuplicateDate(MalformedRow):
    pass


class MalformedTime(MalformedRow):
    pass


class DuplicateCity(MalformedRow):
    pass


class NegativePopulation(MalformedRow):
    pass


class PercentOutOfRange(MalformedRow):
    pass


class UnknownLabel(MalformedRow):
    pass


class MalformedCoordinate(MalformedRow):
    pass


# -- analytics --------------------------------------------------------------

class UnknownFlag(InputError):
    pass


class UnknownDimension(InputError):
    pass


class UnknownCity(InputError):
    pass


class MissingCensus(InputError):
    pass


class IncompleteMonth(InputError):
    pass


class DegenerateInput(InputError):
    pass


class ZeroPopulation(InputError):
    pass


# -- kb / ilp ---------------------------------------------------------------

class FactSyntaxError(InputError):
    def __init__(self, line, column, message):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class ArityMismatch(InputError):
    pass


class UnknownPredicate(InputError):
    pass


class SchemaMismatch(InputError):
    pass


class PredicateMismatch(InputError):
    pass


class SealedError(InvariantError):
    pass


class NoRulesLearned(UserWarning):
    """Sequential covering produced an empty rule set."""
