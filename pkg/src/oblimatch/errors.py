"""Exception types shared across the package."""

from __future__ import annotations


class OracleCapacityError(RuntimeError):
    """Raised when an exact matching oracle is asked for an instance it cannot handle."""


class ProtocolViolation(RuntimeError):
    """Raised when a probe session is used outside the query-commit protocol."""


class StructuralViolation(AssertionError):
    """Raised when a run or certificate breaks a structural invariant.

    These indicate an engine bug (or invalid inputs), never a numerical issue.
    """


class PreconditionError(ValueError):
    """Raised when an operation is called with inputs outside its contract."""


class VerificationFailure(RuntimeError):
    """Raised by verification helpers when a checked threshold is not met."""
