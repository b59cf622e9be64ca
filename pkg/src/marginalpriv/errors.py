"""Exception types shared across the package."""


class MarginalPrivError(Exception):
    """Base class for all errors raised by marginalpriv."""


class ParameterError(MarginalPrivError, ValueError):
    """A privacy, accuracy or size parameter is outside its valid range."""


class DomainError(ParameterError):
    """A formula was evaluated outside its mathematical domain (e.g. log(1/0))."""


class DimensionError(MarginalPrivError, ValueError):
    """Two vectors or a vector and a database disagree on dimension."""


class SequenceError(MarginalPrivError, RuntimeError):
    """An operation was attempted after its budget was exhausted."""


class FormatError(MarginalPrivError, ValueError):
    """A serialized database or sidecar file is malformed."""
