"""Exception hierarchy shared across the pipeline.

The CLI maps each class to a distinct exit code, so keep the split between
configuration, parse, infrastructure and validation failures intact.
"""

from __future__ import annotations


class TrajstoryError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(TrajstoryError):
    """Invalid or inconsistent configuration (bad schema tag, bad request)."""


class ParseError(TrajstoryError):
    """Malformed input that cannot be parsed (dataset header, story markup).

    ``offset`` carries the character position for story markup errors when
    known, else None.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class NotFoundError(TrajstoryError):
    """A requested item (trajectory id) does not exist."""


class InfrastructureError(TrajstoryError):
    """Transient failure of an external dependency; safe to retry.

    ``step`` names the pipeline step that hit the failure when the error is
    propagated by the orchestrator.
    """

    def __init__(self, message: str, step: str | None = None):
        super().__init__(message)
        self.step = step


class ProtocolError(InfrastructureError):
    """Remote endpoint answered, but the payload violates the wire format."""


class MalformedStoryError(TrajstoryError):
    """Backend produced a story without any point-of-interest markup."""


class StoryValidationError(TrajstoryError):
    """Generation retries exhausted; carries the last report and the trace."""

    def __init__(self, message: str, report=None, trace=None, story=None):
        super().__init__(message)
        self.report = report
        self.trace = trace
        self.story = story


# CLI exit codes, one per error class family.
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_INFRA = 4
EXIT_VALIDATION = 5
