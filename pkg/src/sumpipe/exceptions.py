"""Exception hierarchy shared by every pipeline stage."""


class SumpipeError(Exception):
    """Base class for all errors raised by sumpipe."""


class ConfigError(SumpipeError, ValueError):
    """Invalid configuration value, pattern or config file."""


class ProviderError(SumpipeError):
    """A model provider (embeddings or chat) failed.

    ``batch_index`` / ``chunk_index`` locate the failing unit of work so a
    caller can retry or report it.
    """

    def __init__(self, message, *, retryable=True, batch_index=None, chunk_index=None):
        super().__init__(message)
        self.retryable = retryable
        self.batch_index = batch_index
        self.chunk_index = chunk_index


class EmptyResponseError(ProviderError):
    def __init__(self, message="provider returned an empty response", **kwargs):
        kwargs.setdefault("retryable", False)
        super().__init__(message, **kwargs)


class TokenBudgetError(SumpipeError):
    """A rendered prompt would not fit the provider's token budget."""


class EmptyDocumentError(SumpipeError, ValueError):
    """The input has nothing to summarize or score."""


class SummarizationError(SumpipeError):
    """A chunk failed; ``transcript`` holds every exchange completed so far."""

    def __init__(self, message, transcript, chunk_index=None):
        super().__init__(message)
        self.transcript = transcript
        self.chunk_index = chunk_index


class StageError(SumpipeError):
    """A pipeline stage cannot run because its inputs are missing."""
