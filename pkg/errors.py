# errors.py
"""
Exception hierarchy for quadlab.
Every error carries the process exit code the CLI reports for it.
"""


class QuadLabError(Exception):
    """Base class for all lab errors."""
    exit_code = 1


class ConfigError(QuadLabError):
    """Raised when configuration is invalid or missing."""
    exit_code = 1


class DomainError(QuadLabError):
    """Raised when an argument lies outside the domain of an operation."""
    exit_code = 1


class ResourceLimitError(QuadLabError):
    """Raised when a request would exceed the configured memory budget."""
    exit_code = 2


class CutoffError(ResourceLimitError):
    """Raised when an index exceeds the bound of a precomputed table."""
    pass


class FeasibilityError(ResourceLimitError):
    """Raised when an exact computation is requested outside its supported range."""
    pass


class StorageError(QuadLabError):
    """Raised on cache or artifact I/O failures."""
    exit_code = 3
