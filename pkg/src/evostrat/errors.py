"""Exception types shared across the package."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """A strategy, domain or config does not fit the thing it is used with."""


class ParseError(ValueError):
    """A strategy or benchmark file failed validation.

    ``field`` names the offending field (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InvariantError(RuntimeError):
    """An internal invariant was violated (e.g. selecting unevaluated individuals)."""
