"""Exception types shared across the package.

Callers can rely on the split: bad user input / config -> ConfigurationError or
InputError, broken files -> FormatError, exhausted model capacity ->
CapacityExhausted, and anything that indicates a bug in our own logic ->
InternalError.
"""


class Lifelong2dError(Exception):
    """Base class for all package errors."""


class ConfigurationError(Lifelong2dError):
    """Invalid experiment configuration (unknown keys, bad values, bad combos)."""


class InputError(Lifelong2dError):
    """Invalid argument to an operation (shape/range/emptiness violations)."""


class FormatError(Lifelong2dError):
    """A file on disk does not match the expected format or is corrupt."""


class MemoryEmpty(Lifelong2dError):
    """Requested a sample or retrieval from an empty episodic memory."""


class CapacityExhausted(Lifelong2dError):
    """Mask-partitioned network has no free weights left for a new task."""


class InternalError(Lifelong2dError):
    """Invariant violation inside the package (e.g. scripted expert failed)."""
