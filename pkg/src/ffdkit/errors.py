"""Exception taxonomy shared across the toolkit.

Every error maps onto one of the CLI exit-code families:
I/O failures -> 2, validation failures -> 3, violated runtime guards -> 4.
"""


class FfdkitError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FfdkitError):
    """Bad inputs, parameters, or on-disk data (CLI exit code 3)."""


class GuardError(FfdkitError):
    """A runtime invariant was violated, e.g. the LOO leakage guard (exit code 4)."""


class InvalidParameterError(ValidationError):
    pass


class InvalidInputError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class InvalidLabelError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class DuplicateRecordError(ValidationError):
    pass


class CorruptCorpusError(ValidationError):
    pass


class SchemaError(ValidationError):
    pass


class DegenerateLabelsError(ValidationError):
    pass


class MissingConditionError(ValidationError):
    pass


class LeakageError(GuardError):
    """A held-out condition leaked into a training batch."""
