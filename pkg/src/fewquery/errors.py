"""Exception hierarchy shared by all modules."""


class FewQueryError(Exception):
    pass


class FormatError(FewQueryError, ValueError):
    """Malformed input file (vectors, dataset, config, ledger)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionMismatchError(FormatError):
    pass


class DomainError(FewQueryError, ValueError):
    """An operation was called outside its precondition."""


class OOVError(FewQueryError, KeyError):
    def __init__(self, word):
        super().__init__(word)
        self.word = word

    def __str__(self):
        return f"out-of-vocabulary word: {self.word!r}"


class DegenerateDirectionError(DomainError):
    pass


class DegenerateEncodingError(DomainError):
    pass


class QueryError(FewQueryError):
    """The target could not answer a query (transport failure or HTTP error)."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class ProtocolError(QueryError):
    """The target answered with a malformed response."""


class BudgetExhausted(FewQueryError):
    """Raised before a query that would exceed the per-document budget."""
