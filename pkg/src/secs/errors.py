"""Exception hierarchy shared across the package.

Everything user-facing derives from SecsError so the CLI can map domain
failures to exit code 1 while argparse keeps exit code 2 for usage errors.
"""


class SecsError(Exception):
    """Base class for all domain errors raised by this package."""


class SchemaError(SecsError):
    """A tabular file does not match its declared column schema."""


class ContinuityError(SecsError):
    """Dates within a cell are out of order, gapped, or cover partial years."""


class BoundsError(SecsError):
    """A value violates a physical bound (tmax < tmin, negative precip, ...)."""


class ConfigError(SecsError):
    """A configuration object or document fails validation."""


class ShapeError(SecsError):
    """Array dimensions do not line up."""


class NumericError(SecsError):
    """Non-finite values where finite ones are required."""


class StateError(SecsError):
    """An operation was called in the wrong order (e.g. backward without cache)."""


class DataDomainError(SecsError):
    """An input value is outside the mathematical domain of an operation."""


class AlignmentError(SecsError):
    """Weather and yield collections do not cover the same cells/years."""


class SampleSizeError(SecsError):
    """Too few samples to fit the requested estimator."""


class InsufficientReferenceError(SecsError):
    """Reference set too small after filtering to fit tercile thresholds."""


class VersionError(SecsError):
    """A persisted file declares an unsupported format version."""


class IntegrityError(SecsError):
    """A persisted payload is internally inconsistent (truncated, wrong length)."""
