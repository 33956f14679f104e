"""Exception hierarchy shared by all tabshap modules.

The CLI maps these onto stable exit codes: configuration and validation
problems exit 2, numeric failures exit 3, I/O failures exit 4.
"""


class TabshapError(Exception):
    """Base class for all library errors."""


class CapacityError(TabshapError):
    """A size guard was exceeded (e.g. exhaustive enumeration over too many features)."""


class ConfigError(TabshapError):
    """Invalid configuration: bad budgets, empty backgrounds, unknown scenarios."""


class ValidationError(TabshapError):
    """A serialized document failed schema or invariant validation.

    Messages include the offending field path where applicable.
    """


class ShapeError(TabshapError):
    """Dimension or arity mismatch between a model and its inputs."""


class NumericError(TabshapError):
    """Non-finite inputs or a numeric computation that cannot proceed."""


class SingularSystemError(NumericError):
    """The weighted regression system is rank deficient."""


class InvalidPairError(TabshapError):
    """The monotone-marginal precondition of a consistency check does not hold."""
