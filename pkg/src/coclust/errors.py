"""Exception hierarchy for coclust."""


class CoclustError(Exception):
    """Base class for all library errors."""


class InvalidInputError(CoclustError, ValueError):
    """Malformed numeric input: wrong shape, negative or non-finite entries."""


class NormalizationError(CoclustError, ValueError):
    """A matrix cannot be scaled into a probability table (zero total mass)."""


class DegenerateInputError(CoclustError, ValueError):
    """Requested more clusters than the data support can distinguish."""


class SmoothingError(CoclustError, ArithmeticError):
    """The objective is infinite; the input needs a larger pseudocount."""


class FormatError(CoclustError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class AlignmentError(CoclustError, ValueError):
    """Views disagree on their sample identifiers."""
