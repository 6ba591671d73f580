"""Exception types shared across the package.

The CLI maps these onto exit codes: anything derived from InputError is a
problem with user-supplied data or configuration (exit 1); everything else
is a runtime failure (exit 2).
"""

from __future__ import annotations


class ClintrexError(Exception):
    """Base class for errors raised by this package."""


class InputError(ClintrexError):
    """Bad user input: malformed files, broken invariants, bad config."""


class ParseError(InputError):
    """A serialized record could not be parsed."""

    def __init__(self, path: str, line: int, reason: str):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{path}:{line}: {reason}")


class ValidationError(InputError):
    """A constructed object violates a documented invariant."""

    def __init__(self, owner: str, reason: str):
        self.owner = owner
        self.reason = reason
        super().__init__(f"{owner}: {reason}")


class ConfigError(InputError):
    """A configuration value is missing, malformed, or unsupported."""


class EncoderLimitError(InputError):
    """An input sequence exceeds the encoder backend's length limit."""
