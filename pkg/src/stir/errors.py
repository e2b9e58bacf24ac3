"""Exception hierarchy shared across the engine.

Exit-code mapping lives in the CLI: validation errors exit 2, backend
errors exit 3, cache corruption exits 4.
"""


class StirError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(StirError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(InvalidInputError):
    """Input is numerically degenerate (e.g. zero-norm vector)."""


class ValidationError(StirError, ValueError):
    """A file or config failed schema/consistency validation."""


class BackendError(StirError, RuntimeError):
    """A remote or fixture backend failed or returned a malformed response."""


class CacheError(StirError, RuntimeError):
    """On-disk cache or serialized artifact is corrupted beyond recovery."""


class GraphLoadError(CacheError):
    """A serialized graph could not be decoded."""
