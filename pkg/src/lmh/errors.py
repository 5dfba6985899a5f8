"""Exception hierarchy.

Every error also derives from ValueError so callers that only catch
ValueError keep working.
"""


class LMHError(Exception):
    """Base class for all lifted-mh errors."""


class InvalidModelError(LMHError, ValueError):
    pass


class InvalidStateError(LMHError, ValueError):
    pass


class DegreeMismatchError(LMHError, ValueError):
    pass


class CardinalityMismatchError(LMHError, ValueError):
    pass


class StateSpaceTooLargeError(LMHError, ValueError):
    pass


class ConfigurationError(LMHError, ValueError):
    pass


class ScheduleError(ConfigurationError):
    pass


class EmptySampleStreamError(LMHError, ValueError):
    pass


class ShapeMismatchError(LMHError, ValueError):
    pass


class SearchLimitError(LMHError, ValueError):
    pass


class MLNSyntaxError(LMHError, ValueError):
    pass


class UnboundVariableError(MLNSyntaxError):
    pass


class UnknownPredicateError(MLNSyntaxError):
    pass
