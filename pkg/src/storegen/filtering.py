"""Quality and diversity filtering: semantic dedup and relevance pruning."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .embedding import EmbeddingProvider, embed
from .errors import ScorerError
from .model import Placement, Product, Theme, clamp_score, tokenize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    dedup_threshold: float = 0.90
    relevance_threshold: float = 0.50
    min_slate_size: int = 4

    def __post_init__(self) -> None:
        if not (0.0 < self.dedup_threshold <= 1.0):
            raise ValueError("dedup_threshold must be in (0, 1]")
        if not (0.0 <= self.relevance_threshold <= 1.0):
            raise ValueError("relevance_threshold must be in [0, 1]")
        if self.min_slate_size < 1:
            raise ValueError("min_slate_size must be >= 1")


@runtime_checkable
class RelevanceScorer(Protocol):
    """Scores theme/product relevance in [0, 1]. Must tolerate concurrency."""

    scorer_id: str

    def score(self, theme: Theme, product: Product) -> float: ...


def theme_tokens(theme: Theme) -> frozenset[str]:
    tokens: set[str] = set(tokenize(theme.title))
    for concept in theme.product_concepts:
        tokens.update(tokenize(concept))
    return frozenset(tokens)


def product_tokens(product: Product) -> frozenset[str]:
    tokens: set[str] = set(tokenize(product.name))
    for part in product.category_path:
        tokens.update(tokenize(part))
    return frozenset(tokens)


class LexicalOverlapScorer:
    """Stub relevance scorer: fraction of theme tokens found in the product.

    score = |theme_tokens & product_tokens| / |theme_tokens|, clamped to
    [0, 1]. Token sets come from the theme title plus concepts and the
    product name plus category path. Never fails.
    """

    scorer_id = "lexical-overlap"

    def score(self, theme: Theme, product: Product) -> float:
        theme_set = theme_tokens(theme)
        if not theme_set:
            return 0.0
        overlap = len(theme_set & product_tokens(product))
        return min(1.0, max(0.0, overlap / len(theme_set)))


def score_relevance(theme: Theme, product: Product, scorer: RelevanceScorer) -> float:
    """Score through a pluggable scorer, enforcing the [0, 1] contract.

    External scorer failures surface as ScorerError; out-of-range output is
    clamped and logged rather than propagated.
    """
    try:
        raw = scorer.score(theme, product)
    except ScorerError:
        raise
    except Exception as exc:
        raise ScorerError(f"scorer {getattr(scorer, 'scorer_id', '?')} failed: {exc}") from exc
    try:
        return clamp_score(raw, source=getattr(scorer, "scorer_id", "scorer"))
    except ValueError as exc:
        raise ScorerError(str(exc)) from exc


def dedup_themes(
    themes: Sequence[Theme],
    provider: EmbeddingProvider,
    cfg: FilterConfig,
    include_concepts: bool = False,
) -> list[Theme]:
    """Greedy first-wins semantic dedup in rank order.

    A theme is dropped iff its embedding has cosine similarity >=
    dedup_threshold with any already-kept theme. Dedup operates on title
    embeddings by default; ``include_concepts`` widens the text to title
    plus concepts. Output is a subsequence of the input and the pass is
    idempotent.
    """
    if not themes:
        return []

    def text_of(theme: Theme) -> str:
        if include_concepts:
            return " ".join([theme.title, *theme.product_concepts])
        return theme.title

    vectors = [embed(text_of(t), provider).values for t in themes]
    kept: list[Theme] = []
    kept_rows: list[np.ndarray] = []
    for theme, vec in zip(themes, vectors):
        if kept_rows and float(np.max(np.stack(kept_rows) @ vec)) >= cfg.dedup_threshold:
            logger.info("dedup removed theme %r", theme.title)
            continue
        kept.append(theme)
        kept_rows.append(vec)
    return kept


def prune_placements(placements: Sequence[Placement], cfg: FilterConfig) -> list[Placement]:
    """Remove low-relevance products, then placements too thin to serve.

    Products scoring below relevance_threshold are dropped from each slate;
    any placement left with fewer than min_slate_size products is removed
    entirely (the carousel-collapse guard). Order is preserved and no slate
    ever grows.
    """
    survivors: list[Placement] = []
    for placement in placements:
        slate = tuple(
            (product, score)
            for product, score in placement.slate
            if score >= cfg.relevance_threshold
        )
        if len(slate) < cfg.min_slate_size:
            logger.info(
                "collapse guard dropped placement %r (slate %d < %d)",
                placement.title,
                len(slate),
                cfg.min_slate_size,
            )
            continue
        survivors.append(replace(placement, slate=slate))
    return survivors
