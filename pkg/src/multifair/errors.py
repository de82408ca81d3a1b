"""Semantic exception hierarchy.

Every error that a caller can reasonably branch on gets its own class.
The CLI maps these onto exit codes: parse/IO problems exit 1, domain and
precondition violations exit 2, statistical failures of sampled runs exit 3.
"""


class MultifairError(Exception):
    """Base class for all library errors."""


class InputError(MultifairError):
    """Malformed input data (bad JSON shape, missing fields, bad numbers)."""


class DomainError(MultifairError):
    """Operation invoked outside its mathematical domain.

    Examples: a binary-only audit on a multi-class instance, hypothesis
    ranges that are not set indicators where indicators are required.
    """


class SupportMismatchError(DomainError):
    """Two distributions that must share a support set do not."""


class ConditioningMismatchError(DomainError):
    """Joint tables disagree on the marginal of the conditioning coordinate."""


class EnumerationLimitError(DomainError):
    """An exact enumeration was requested beyond its size guard."""


class PrecisionTooCoarseError(DomainError):
    """Requested grid precision yields no usable denominator (m < 1)."""


class EmptyBlockError(DomainError):
    """Edge density requested for an empty vertex block."""


class StructuralFailureError(DomainError):
    """A predictor's level sets do not form a product partition."""


class RangeMismatchError(DomainError):
    """Hypothesis range is not contained in a loss function's action set."""


class ConstructionError(DomainError):
    """Inconsistent parameters when building a distinguisher family."""


class InternalInvariantError(MultifairError):
    """A guaranteed-by-theorem invariant failed at runtime; always a bug."""


class SampledRunFailureError(MultifairError):
    """A sample-based construction exceeded its iteration cap.

    Carries the transcript so the failed run can still be inspected.
    Allowed with probability at most the configured failure budget.
    """

    def __init__(self, message, transcript=None):
        super().__init__(message)
        self.transcript = transcript
