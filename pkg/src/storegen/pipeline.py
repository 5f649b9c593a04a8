"""Orchestration of the generation phases into a served storefront.

Phase order is fixed: theme generation -> guardrails -> semantic dedup ->
per-theme candidate selection, keyword generation, retrieval, scoring ->
pruning -> assembly. Failures never surface to the caller; every path ends
in either a generated page or the deterministic fallback, and each build
emits an audit record with per-phase counts and the per-placement candidate
sets needed to verify the keyword constraint after the fact.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .cache import CacheKey, StorefrontCache
from .catalog import ProductIndex, retrieve_products
from .corpus import KeywordCorpus
from .embedding import EmbeddingProvider
from .errors import GenerationFailed, GuardrailExhausted
from .filtering import (
    FilterConfig,
    RelevanceScorer,
    dedup_themes,
    prune_placements,
    score_relevance,
)
from .generation import (
    FallbackPlan,
    KeywordGenerator,
    ThemeGenerationRequest,
    ThemeGenerator,
    apply_guardrails,
    fallback_storefront,
    generate_keywords_with_stats,
    generate_themes,
    select_candidates,
)
from .model import (
    Placement,
    PolicyConstraints,
    Product,
    Provenance,
    Storefront,
    UserContext,
    context_hash,
    sort_slate,
    validate_storefront,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable the cascade consumes, pinned in one place."""

    m_default: int = 5
    theme_generator_id: str = "stub-themes"
    keyword_generator_id: str = "stub-keywords"
    filter: FilterConfig = field(default_factory=FilterConfig)
    k_per_concept: int = 20
    candidate_cap: int = 100
    max_keywords: int = 5
    slate_limit: int = 20
    cache_ttl_seconds: float = 3600.0
    config_version: str = "v1"

    def __post_init__(self) -> None:
        if self.m_default < 1:
            raise ValueError("m_default must be >= 1")
        if self.k_per_concept < 1 or self.candidate_cap < 1:
            raise ValueError("candidate parameters must be >= 1")
        if self.max_keywords < 1:
            raise ValueError("max_keywords must be >= 1")
        if self.slate_limit < self.filter.min_slate_size:
            raise ValueError("slate_limit must be >= min_slate_size")
        if self.cache_ttl_seconds <= 0:
            raise ValueError("cache_ttl_seconds must be positive")
        if not self.config_version:
            raise ValueError("config_version must be non-empty")


def validate_pipeline_config(cfg: PipelineConfig, policy: PolicyConstraints) -> None:
    """Cross-check pipeline tunables against the policy bounds."""
    if cfg.max_keywords > policy.max_keywords_per_placement:
        raise ValueError("max_keywords exceeds policy.max_keywords_per_placement")
    if cfg.filter.min_slate_size != policy.min_slate_size:
        raise ValueError("filter.min_slate_size must match policy.min_slate_size")
    if cfg.config_version != policy.config_version:
        raise ValueError("pipeline and policy config_version must match")


@dataclass(frozen=True)
class PipelineDeps:
    """Shared read-only dependencies for concurrent per-user builds."""

    corpus: KeywordCorpus
    index: ProductIndex
    provider: EmbeddingProvider
    theme_generator: ThemeGenerator
    keyword_generator: KeywordGenerator
    scorer: RelevanceScorer
    fallback_plan: FallbackPlan


@dataclass
class PlacementAudit:
    rank_hint: int
    title: str
    candidate_ids: tuple[str, ...]
    keyword_ids: tuple[str, ...]
    retrieved_count: int
    kept_products: int
    dropped_out_of_set: int

    def to_record(self) -> dict[str, Any]:
        return {
            "rank_hint": self.rank_hint,
            "title": self.title,
            "candidate_ids": list(self.candidate_ids),
            "keyword_ids": list(self.keyword_ids),
            "retrieved_count": self.retrieved_count,
            "kept_products": self.kept_products,
            "dropped_out_of_set": self.dropped_out_of_set,
        }


@dataclass
class BuildAudit:
    """Structured per-build record: counts, placements, phase timings."""

    user_id: str
    provenance: str = Provenance.GENERATED.value
    fallback_reason: str | None = None
    themes_requested: int = 0
    themes_generated: int = 0
    guardrail_dropped: int = 0
    dedup_dropped: int = 0
    keyword_failed_themes: int = 0
    keywords_emitted: int = 0
    keywords_dropped_out_of_set: int = 0
    placements_pre_prune: int = 0
    products_pruned: int = 0
    placements_dropped_collapse: int = 0
    placements_final: int = 0
    placements: list[PlacementAudit] = field(default_factory=list)
    timings_ms: dict[str, float] = field(default_factory=dict)

    def reconciles(self) -> bool:
        """themes generated - guardrailed - deduped - failed == pre-prune count."""
        return (
            self.themes_generated
            - self.guardrail_dropped
            - self.dedup_dropped
            - self.keyword_failed_themes
            == self.placements_pre_prune
        )

    def to_record(self) -> dict[str, Any]:
        return {
            "user_id": self.user_id,
            "provenance": self.provenance,
            "fallback_reason": self.fallback_reason,
            "counts": {
                "themes_requested": self.themes_requested,
                "themes_generated": self.themes_generated,
                "guardrail_dropped": self.guardrail_dropped,
                "dedup_dropped": self.dedup_dropped,
                "keyword_failed_themes": self.keyword_failed_themes,
                "keywords_emitted": self.keywords_emitted,
                "keywords_dropped_out_of_set": self.keywords_dropped_out_of_set,
                "placements_pre_prune": self.placements_pre_prune,
                "products_pruned": self.products_pruned,
                "placements_dropped_collapse": self.placements_dropped_collapse,
                "placements_final": self.placements_final,
            },
            "placements": [p.to_record() for p in self.placements],
            "timings_ms": dict(self.timings_ms),
        }


class _PhaseTimer:
    def __init__(self, audit: BuildAudit) -> None:
        self._audit = audit

    def __call__(self, phase: str):  # context manager factory
        return _PhaseSpan(self._audit, phase)


class _PhaseSpan:
    def __init__(self, audit: BuildAudit, phase: str) -> None:
        self._audit = audit
        self._phase = phase

    def __enter__(self) -> None:
        self._start = time.perf_counter()

    def __exit__(self, *exc_info: object) -> None:
        elapsed = (time.perf_counter() - self._start) * 1000.0
        self._audit.timings_ms[self._phase] = round(
            self._audit.timings_ms.get(self._phase, 0.0) + elapsed, 3
        )


def _clamp_m(cfg: PipelineConfig, policy: PolicyConstraints) -> int:
    return min(max(cfg.m_default, policy.min_placements), policy.max_placements)


def _fallback(
    ctx: UserContext,
    policy: PolicyConstraints,
    cfg: PipelineConfig,
    deps: PipelineDeps,
    audit: BuildAudit,
    reason: str,
) -> Storefront:
    logger.info("user %s falling back: %s", ctx.user_id, reason)
    audit.provenance = Provenance.FALLBACK.value
    audit.fallback_reason = reason
    timer = _PhaseTimer(audit)
    with timer("fallback"):
        storefront = fallback_storefront(
            ctx,
            policy,
            deps.index,
            deps.fallback_plan,
            slate_limit=cfg.slate_limit,
            config_version=cfg.config_version,
        )
        # The collapse guard applies to fallback pages too: a thin catalog
        # must never surface an undersized carousel, even a curated one.
        kept = prune_placements(storefront.placements, cfg.filter)
        audit.placements_dropped_collapse += len(storefront.placements) - len(kept)
        storefront = replace(storefront, placements=tuple(kept))
    audit.placements_final = len(storefront.placements)
    for placement in storefront.placements:
        audit.placements.append(
            PlacementAudit(
                rank_hint=placement.theme.rank_hint,
                title=placement.title,
                candidate_ids=tuple(k.keyword_id for k in placement.keywords),
                keyword_ids=tuple(k.keyword_id for k in placement.keywords),
                retrieved_count=placement.retrieved_count or 0,
                kept_products=len(placement.slate),
                dropped_out_of_set=0,
            )
        )
    return storefront


def build_storefront_with_audit(
    ctx: UserContext,
    policy: PolicyConstraints,
    cfg: PipelineConfig,
    deps: PipelineDeps,
) -> tuple[Storefront, BuildAudit]:
    """Run the full cascade for one user; always returns a storefront.

    Fallback is total: generation errors, exhausted guardrails, and
    over-pruned pages all resolve to the static plan. Partial keyword
    failures do not force fallback as long as at least min_placements
    placements survive.
    """
    audit = BuildAudit(user_id=ctx.user_id)
    timer = _PhaseTimer(audit)
    m = _clamp_m(cfg, policy)
    audit.themes_requested = m

    with timer("theme_generation"):
        try:
            request = ThemeGenerationRequest(ctx=ctx, policy=policy, m=m)
            themes = generate_themes(request, deps.theme_generator)
        except GenerationFailed:
            return _fallback(ctx, policy, cfg, deps, audit, "generation_failed"), audit
    audit.themes_generated = len(themes)

    with timer("guardrails"):
        try:
            guarded = apply_guardrails(themes, policy)
        except GuardrailExhausted:
            audit.guardrail_dropped = len(themes)
            return _fallback(ctx, policy, cfg, deps, audit, "guardrail_exhausted"), audit
    audit.guardrail_dropped = len(themes) - len(guarded)

    with timer("dedup"):
        deduped = dedup_themes(guarded, deps.provider, cfg.filter)
    audit.dedup_dropped = len(guarded) - len(deduped)

    placements: list[Placement] = []
    placement_audits: dict[int, PlacementAudit] = {}
    for theme in deduped:
        with timer("candidate_selection"):
            candidates = select_candidates(
                theme, deps.corpus, deps.provider, cfg.k_per_concept, cfg.candidate_cap
            )
        with timer("keyword_generation"):
            try:
                keywords, dropped = generate_keywords_with_stats(
                    theme, candidates, deps.keyword_generator, cfg.max_keywords
                )
            except GenerationFailed:
                audit.keyword_failed_themes += 1
                logger.warning(
                    "keyword generation failed for theme %r (user %s)",
                    theme.title,
                    ctx.user_id,
                )
                continue
        audit.keywords_emitted += len(keywords)
        audit.keywords_dropped_out_of_set += dropped

        with timer("retrieval_scoring"):
            unique: dict[str, Product] = {}
            for keyword in keywords:
                for product in retrieve_products(deps.index, keyword, cfg.slate_limit):
                    unique.setdefault(product.product_id, product)
            scored = sort_slate(
                (product, score_relevance(theme, product, deps.scorer))
                for product in unique.values()
            )
        placement = Placement(
            theme=theme,
            keywords=tuple(keywords),
            slate=scored[: cfg.slate_limit],
            retrieved_count=len(unique),
        )
        placements.append(placement)
        placement_audits[theme.rank_hint] = PlacementAudit(
            rank_hint=theme.rank_hint,
            title=theme.title,
            candidate_ids=tuple(c.keyword_id for c in candidates.candidates),
            keyword_ids=tuple(k.keyword_id for k in keywords),
            retrieved_count=len(unique),
            kept_products=len(placement.slate),
            dropped_out_of_set=dropped,
        )
    audit.placements_pre_prune = len(placements)

    with timer("pruning"):
        pre_prune_products = sum(len(p.slate) for p in placements)
        pruned = prune_placements(placements, cfg.filter)
        audit.products_pruned = pre_prune_products - sum(len(p.slate) for p in pruned)
        audit.placements_dropped_collapse = len(placements) - len(pruned)

    if len(pruned) < policy.min_placements:
        return _fallback(ctx, policy, cfg, deps, audit, "post_prune_below_min"), audit

    with timer("assembly"):
        for placement in pruned:
            pa = placement_audits[placement.theme.rank_hint]
            pa.kept_products = len(placement.slate)
            audit.placements.append(pa)
            missing = set(pa.keyword_ids) - set(pa.candidate_ids)
            if missing:  # enforced upstream; a breach here is a code bug
                raise RuntimeError(
                    f"keyword constraint breach for {placement.title!r}: {missing}"
                )
        storefront = Storefront(
            user_id=ctx.user_id,
            placements=tuple(pruned),
            provenance=Provenance.GENERATED,
            context_hash=context_hash(ctx, policy),
            config_version=cfg.config_version,
        )
        validate_storefront(storefront, policy)
    audit.placements_final = len(storefront.placements)
    return storefront, audit


def build_storefront(
    ctx: UserContext,
    policy: PolicyConstraints,
    cfg: PipelineConfig,
    deps: PipelineDeps,
) -> Storefront:
    storefront, _ = build_storefront_with_audit(ctx, policy, cfg, deps)
    return storefront


def cache_key_for(
    user_id: str, ctx: UserContext, policy: PolicyConstraints, cfg: PipelineConfig
) -> CacheKey:
    return (user_id, context_hash(ctx, policy), cfg.config_version)


def get_or_build(
    user_id: str,
    ctx: UserContext,
    policy: PolicyConstraints,
    cfg: PipelineConfig,
    cache: StorefrontCache,
    deps: PipelineDeps,
    builder: Callable[[], Storefront] | None = None,
) -> Storefront:
    """Serve from cache when possible, building at most once per cold key.

    Cache hits come back with provenance rewritten to Cached. Concurrent
    requests for one cold key trigger exactly one build; the rest share it.
    Cache failures degrade to a plain build rather than an error.
    """
    key = cache_key_for(user_id, ctx, policy, cfg)
    try:
        hit = cache.get(key)
    except Exception:
        logger.exception("cache get failed for %s; building", key)
        hit = None
    if hit is not None:
        return replace(hit, provenance=Provenance.CACHED)

    def build_and_store() -> Storefront:
        built = builder() if builder is not None else build_storefront(ctx, policy, cfg, deps)
        try:
            cache.put(key, built)
        except Exception:
            logger.exception("cache put failed for %s", key)
        return built

    # Re-check inside the flight so a caller that lost the race to a
    # just-finished build still gets the cached copy instead of rebuilding.
    def build_checked() -> Storefront:
        cached = cache.get(key)
        if cached is not None:
            return replace(cached, provenance=Provenance.CACHED)
        return build_and_store()

    storefront, _shared = cache.flights.do(key, build_checked)
    return storefront


def invalidate(cache: StorefrontCache, predicate: Callable[[CacheKey], bool]) -> int:
    """Evict matching cache entries; returns how many were removed."""
    return cache.invalidate(predicate)
