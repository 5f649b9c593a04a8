"""Exception types shared across the storefront pipeline."""

from __future__ import annotations


class StoregenError(Exception):
    """Base class for all package errors."""


class MalformedRecord(StoregenError):
    """A delimited input record failed to parse or validate."""

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateKeyword(StoregenError):
    def __init__(self, keyword_id: str) -> None:
        super().__init__(f"duplicate keyword_id: {keyword_id}")
        self.keyword_id = keyword_id


class UnknownKeyword(StoregenError):
    def __init__(self, keyword_id: str) -> None:
        super().__init__(f"keyword_id not in corpus: {keyword_id}")
        self.keyword_id = keyword_id


class DimensionMismatch(StoregenError):
    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(f"expected dimension {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class ProviderError(StoregenError):
    """An embedding provider failed to produce a usable vector."""


class GeneratorError(StoregenError):
    """A generator implementation failed outright (transport, crash)."""


class SchemaViolation(StoregenError):
    """Structured generator output failed schema validation.

    ``reason`` is a machine-readable code: parse_error, wrong_count,
    empty_title, missing_product_concepts, duplicate_title, missing_field.
    """

    def __init__(self, reason: str, detail: str = "") -> None:
        super().__init__(f"{reason}{': ' + detail if detail else ''}")
        self.reason = reason
        self.detail = detail


class GenerationFailed(StoregenError):
    """Generation (plus its single retry) produced nothing usable."""


class GuardrailExhausted(StoregenError):
    """Guardrails removed so many themes the page can no longer be built."""


class InvalidFallbackPlan(StoregenError):
    """The static fallback plan failed startup validation."""


class ScorerError(StoregenError):
    """A relevance scorer failed or returned a non-finite value."""


class ZeroBaseline(StoregenError):
    """Relative lift is undefined for a non-positive control rate."""


class InvalidCounts(StoregenError):
    """Success/trial counts for a proportion test are inconsistent."""


class ConfigError(StoregenError):
    """Configuration file is missing, malformed, or inconsistent."""
