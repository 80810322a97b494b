"""Shared exception types."""


class CragError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(CragError):
    """Malformed dataset file or inconsistent corpus structures."""


class MalformedCompletion(CragError):
    """LLM reply could not be parsed (majority of lines malformed)."""


class TransportError(CragError):
    """Live endpoint unreachable after retries were exhausted."""


class ReplayMiss(CragError):
    """Strict replay backend has no stored exchange for a request key."""

    def __init__(self, template_id: str, digest: str):
        super().__init__(f"no recorded exchange for template={template_id} hash={digest}")
        self.template_id = template_id
        self.digest = digest


class EmptyRecommendation(CragError):
    """The recommendation stage produced no linkable catalog items."""
