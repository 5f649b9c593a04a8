"""Embedding providers and the embed() boundary.

The bundled provider is a deterministic stub: every token of the normalized
text maps to a unit vector derived from a seeded digest, and the text embeds
as the normalized sum of its token vectors. Equal normalized texts therefore
embed identically, and texts sharing tokens land near each other, which is
enough structure for candidate retrieval and deduplication at desk scale.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ProviderError
from .model import EmbeddingVector, normalize_text

DEFAULT_DIMENSION = 64


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Maps normalized text to a unit-norm vector of fixed dimension."""

    provider_id: str

    @property
    def dimension(self) -> int: ...

    def embed_text(self, text: str) -> np.ndarray: ...


def _digest_floats(seed: int, label: str, dimension: int) -> np.ndarray:
    """Expand a seeded digest into `dimension` floats in [-0.5, 0.5)."""
    material = f"{seed}:{label}".encode("utf-8")
    out = np.empty(dimension, dtype=np.float64)
    block = b""
    counter = 0
    for i in range(dimension):
        if not block:
            block = hashlib.sha256(material + counter.to_bytes(4, "big")).digest()
            counter += 1
        chunk, block = block[:8], block[8:]
        out[i] = int.from_bytes(chunk, "big") / 2.0**64 - 0.5
    return out


class HashedEmbeddingProvider:
    """Deterministic bag-of-hashed-tokens embedding stub. Never fails."""

    provider_id = "hashed-bag"

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> None:
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self._dimension = dimension
        self._seed = seed
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def seed(self) -> int:
        return self._seed

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is None:
            raw = _digest_floats(self._seed, f"tok:{token}", self._dimension)
            cached = raw / np.linalg.norm(raw)
            cached.flags.writeable = False
            self._token_cache[token] = cached
        return cached

    def embed_text(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raw = _digest_floats(self._seed, "empty:", self._dimension)
            return raw / np.linalg.norm(raw)
        total = np.zeros(self._dimension, dtype=np.float64)
        for token in tokens:
            total += self._token_vector(token)
        norm = float(np.linalg.norm(total))
        if norm == 0.0:  # astronomically unlikely cancellation
            return self._token_vector(tokens[0]).copy()
        return total / norm


def embed(text: str, provider: EmbeddingProvider) -> EmbeddingVector:
    """Embed text through a provider, enforcing the vector contract.

    Text is normalized before the provider sees it, so texts equal after
    normalization always embed identically. Provider failures surface as
    ProviderError; slightly off-norm output is renormalized.
    """
    normalized = normalize_text(text)
    try:
        raw = np.asarray(provider.embed_text(normalized), dtype=np.float64)
    except Exception as exc:
        raise ProviderError(f"embedding provider failed for {normalized!r}: {exc}") from exc
    if raw.ndim != 1 or raw.shape[0] != provider.dimension:
        raise ProviderError(
            f"provider returned shape {raw.shape}, expected ({provider.dimension},)"
        )
    if not np.all(np.isfinite(raw)):
        raise ProviderError("provider returned non-finite components")
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        raise ProviderError("provider returned a zero vector")
    return EmbeddingVector(raw / norm)
