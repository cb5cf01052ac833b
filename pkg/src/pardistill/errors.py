"""Exception types shared across the package.

The CLI maps these to exit codes: UsageError -> 1, ValidationError -> 2,
OSError -> 3.
"""


class UsageError(ValueError):
    """An operation was called with arguments that violate its preconditions."""


class ValidationError(ValueError):
    """Data or configuration failed an invariant check."""


class FormatError(ValidationError):
    """An on-disk artifact is malformed (bad magic, wrong size, bad values)."""
