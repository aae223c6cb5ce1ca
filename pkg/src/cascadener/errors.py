"""Exception hierarchy shared across the package."""


class CascadeError(Exception):
    """Base class for every error raised by cascadener."""


class ParseError(CascadeError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """A record parsed but violates a domain invariant."""


class IntegrityError(CascadeError):
    """The taxonomy tree is inconsistent (orphan, duplicate, bad level)."""


class UnknownNode(CascadeError, KeyError):
    pass


# markup
class MarkupError(CascadeError):
    pass


class MalformedMarkup(MarkupError):
    pass


class OverlapError(MarkupError):
    pass


class AlignmentFailure(MarkupError):
    pass


# backend
class BackendError(CascadeError):
    pass


class TransportError(BackendError):
    pass


class RequestTimeout(TransportError, TimeoutError):
    pass


class SchemaError(BackendError):
    pass


class ReplayMiss(BackendError, KeyError):
    """Playback-only replay file has no entry for the request."""


class DimensionMismatch(BackendError):
    pass


class EmptyInput(CascadeError, ValueError):
    pass


# classification
class UnparseableLabel(CascadeError):
    def __init__(self, message: str, generation: str = ""):
        self.generation = generation
        super().__init__(message)


# metrics
class DegenerateCategory(CascadeError, ValueError):
    pass


class ZeroVector(CascadeError, ValueError):
    pass


class DegenerateDistribution(CascadeError, ValueError):
    pass


class ZeroMean(CascadeError, ValueError):
    pass


# dyncat
class UnresolvableLabel(CascadeError):
    pass


# dataio / eval
class TagSequenceError(ParseError):
    pass


class AlignmentError(CascadeError):
    """Predictions and gold do not cover the same sentence ids."""
