"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data, files, or configuration."""


class NumericError(RuntimeError):
    """A numerical routine produced a non-finite or unsolvable result."""
