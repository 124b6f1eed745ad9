"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1, FormatError -> 2.
"""


class ValidationError(ValueError):
    """A value violates a documented precondition or domain invariant."""


class FormatError(ValueError):
    """A byte stream or text document does not conform to its file format."""
