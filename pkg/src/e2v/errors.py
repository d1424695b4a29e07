"""Exception taxonomy shared across modules.

The CLI maps these onto process exit codes, so raising the right class
matters more than the message text.
"""

from __future__ import annotations


class E2vError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(E2vError):
    """Bad or inconsistent project configuration (exit code 2)."""


class MissingPrerequisiteError(E2vError):
    """A pipeline stage needs artifacts another stage has not produced (exit code 3)."""


class RemoteServiceError(E2vError):
    """A remote LLM or embedding call failed (exit code 4)."""

    def __init__(self, message: str, status: int | None = None, retriable: bool = False):
        super().__init__(message)
        self.status = status
        self.retriable = retriable


class NumericalError(E2vError):
    """Non-finite values or a numerically impossible request (exit code 5)."""


class CorpusError(E2vError):
    """Unrecoverable problem with corpus files or raw text."""


class LeakageError(E2vError):
    """A standardizer or ranking was applied outside the subset it was fitted on."""
