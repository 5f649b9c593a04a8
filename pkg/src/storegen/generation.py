"""Theme and keyword generation behind pluggable interfaces.

Phase boundaries matter here: theme generation is the only step that sees
raw user context. Everything downstream works from the Theme it produced
(title, persona, product concepts), and keyword generation is hard-bounded
to the retrieved candidate set no matter what a generator emits.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Protocol, Sequence, runtime_checkable

from .catalog import ProductIndex, retrieve_products
from .corpus import KeywordCorpus, knn
from .embedding import EmbeddingProvider, embed
from .errors import (
    GenerationFailed,
    GeneratorError,
    GuardrailExhausted,
    InvalidFallbackPlan,
    SchemaViolation,
)
from .model import (
    Keyword,
    Placement,
    PolicyConstraints,
    Provenance,
    Storefront,
    Theme,
    UserContext,
    context_hash,
    normalize_text,
    sort_slate,
)

logger = logging.getLogger(__name__)

# Adjective pool for the stub theme generator. The synthetic data generator
# shares it so stub themes line up lexically with synthetic keywords.
STUB_ADJECTIVES: tuple[str, ...] = (
    "crunchy", "organic", "fresh", "smoky", "zesty", "creamy", "hearty",
    "spicy", "sweet", "savory", "chilled", "toasty", "crispy", "tangy",
    "rustic", "vibrant", "cozy", "bold", "mellow", "bright",
)

GENERIC_CATEGORIES: tuple[str, ...] = (
    "pantry", "snacks", "beverages", "produce", "household",
    "breakfast", "dairy", "frozen", "bakery", "deli",
)


@dataclass(frozen=True)
class ThemeGenerationRequest:
    ctx: UserContext
    policy: PolicyConstraints
    m: int

    def __post_init__(self) -> None:
        if not (self.policy.min_placements <= self.m <= self.policy.max_placements):
            raise ValueError(
                f"m={self.m} outside [{self.policy.min_placements}, "
                f"{self.policy.max_placements}]"
            )


@dataclass(frozen=True)
class RawGeneration:
    """A generator's raw structured output; validation happens downstream."""

    payload: str
    generator_id: str


@dataclass(frozen=True)
class CandidateSet:
    """The kNN-restricted corpus subset offered to the keyword generator."""

    theme_ref: int
    candidates: tuple[Keyword, ...]
    source_similarities: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.candidates) != len(self.source_similarities):
            raise ValueError("candidates and similarities must be parallel")
        ids = [c.keyword_id for c in self.candidates]
        if len(set(ids)) != len(ids):
            raise ValueError("candidate keyword_ids must be unique")

    def __len__(self) -> int:
        return len(self.candidates)

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(c.keyword_id for c in self.candidates)


@runtime_checkable
class ThemeGenerator(Protocol):
    generator_id: str

    def generate(self, request: ThemeGenerationRequest) -> RawGeneration: ...


@runtime_checkable
class KeywordGenerator(Protocol):
    generator_id: str

    def generate(
        self, theme: Theme, candidates: CandidateSet, max_keywords: int
    ) -> Sequence[str]:
        """Return chosen keyword_ids; out-of-candidate ids are discarded."""
        ...


def validate_themes(raw: RawGeneration, request: ThemeGenerationRequest) -> list[Theme]:
    """Parse structured generator output into Themes, or raise SchemaViolation.

    The payload must be a JSON array of exactly ``request.m`` objects, each
    with a non-empty title, a persona, and at least one product concept.
    Titles must be distinct after normalization. rank_hint is assigned from
    payload position.
    """
    try:
        parsed = json.loads(raw.payload)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("parse_error", exc.msg) from exc
    if not isinstance(parsed, list) or not all(isinstance(t, dict) for t in parsed):
        raise SchemaViolation("parse_error", "payload is not an array of objects")
    if len(parsed) != request.m:
        raise SchemaViolation("wrong_count", f"expected {request.m}, got {len(parsed)}")
    themes: list[Theme] = []
    seen_titles: set[str] = set()
    for position, item in enumerate(parsed):
        missing = {"title", "persona", "product_concepts"} - item.keys()
        if missing:
            raise SchemaViolation("missing_field", ", ".join(sorted(missing)))
        title = str(item["title"])
        if not normalize_text(title):
            raise SchemaViolation("empty_title", f"position {position}")
        concepts = item["product_concepts"]
        if not isinstance(concepts, list) or not concepts:
            raise SchemaViolation("missing_product_concepts", f"position {position}")
        norm_title = normalize_text(title)
        if norm_title in seen_titles:
            raise SchemaViolation("duplicate_title", norm_title)
        seen_titles.add(norm_title)
        themes.append(
            Theme(
                title=title,
                persona=str(item["persona"]),
                product_concepts=tuple(str(c) for c in concepts),
                rank_hint=position,
            )
        )
    return themes


def generate_themes(request: ThemeGenerationRequest, gen: ThemeGenerator) -> list[Theme]:
    """Produce exactly m validated themes, retrying once before giving up.

    Raises GenerationFailed when both attempts fail; the caller is expected
    to fall back to the static plan.
    """
    last_error: Exception | None = None
    for attempt in (1, 2):
        try:
            raw = gen.generate(request)
            return validate_themes(raw, request)
        except (GeneratorError, SchemaViolation) as exc:
            last_error = exc
            logger.warning(
                "theme generation attempt %d failed (%s): %s",
                attempt,
                gen.generator_id,
                exc,
            )
    raise GenerationFailed(f"theme generation failed after retry: {last_error}")


def apply_guardrails(themes: Sequence[Theme], policy: PolicyConstraints) -> list[Theme]:
    """Drop themes whose title or concepts contain a banned term.

    Matching is substring on normalized text. Output order is preserved; if
    the survivors fall below min_placements the guardrail raises
    GuardrailExhausted to signal fallback.
    """
    kept: list[Theme] = []
    for theme in themes:
        haystacks = [normalize_text(theme.title)]
        haystacks.extend(normalize_text(c) for c in theme.product_concepts)
        if any(term and term in hay for term in policy.banned_terms for hay in haystacks):
            logger.info("guardrail removed theme %r", theme.title)
            continue
        kept.append(theme)
    if len(kept) < policy.min_placements:
        raise GuardrailExhausted(
            f"{len(kept)} themes survive guardrails, need {policy.min_placements}"
        )
    return kept


@dataclass(frozen=True)
class FallbackEntry:
    title: str
    keywords: tuple[Keyword, ...]


@dataclass(frozen=True)
class FallbackPlan:
    """A static, pre-validated list of (title, keywords) placements."""

    entries: tuple[FallbackEntry, ...]


def load_fallback_plan(
    raw_entries: Sequence[Mapping[str, Any]], corpus: KeywordCorpus
) -> FallbackPlan:
    """Validate a fallback plan against the corpus at startup.

    Raises InvalidFallbackPlan on empty plans, duplicate titles, or keyword
    ids missing from the corpus. Request-time fallback never fails after
    this gate passes.
    """
    if not raw_entries:
        raise InvalidFallbackPlan("fallback plan is empty")
    entries: list[FallbackEntry] = []
    titles: set[str] = set()
    for pos, item in enumerate(raw_entries):
        title = str(item.get("title", ""))
        if not normalize_text(title):
            raise InvalidFallbackPlan(f"entry {pos}: empty title")
        norm = normalize_text(title)
        if norm in titles:
            raise InvalidFallbackPlan(f"entry {pos}: duplicate title {norm!r}")
        titles.add(norm)
        keyword_ids = item.get("keyword_ids", [])
        if not keyword_ids:
            raise InvalidFallbackPlan(f"entry {pos}: no keyword_ids")
        keywords: list[Keyword] = []
        for kid in keyword_ids:
            keyword = corpus.by_id.get(str(kid))
            if keyword is None:
                raise InvalidFallbackPlan(f"entry {pos}: unknown keyword_id {kid!r}")
            keywords.append(keyword)
        entries.append(FallbackEntry(title=title, keywords=tuple(keywords)))
    return FallbackPlan(entries=tuple(entries))


FALLBACK_SLATE_SCORE = 1.0  # plan keywords are curated; trust them fully


def fallback_storefront(
    ctx: UserContext,
    policy: PolicyConstraints,
    index: ProductIndex,
    plan: FallbackPlan,
    slate_limit: int = 20,
    config_version: str | None = None,
) -> Storefront:
    """Deterministic storefront built purely from the static plan.

    Emits one placement per plan entry, including entries whose keywords
    currently retrieve nothing (their empty slates are left for the serving
    layer's collapse guard to prune). Never fails once the plan validated.
    """
    placements: list[Placement] = []
    for rank, entry in enumerate(plan.entries):
        products: dict[str, Any] = {}
        for keyword in entry.keywords:
            for product in retrieve_products(index, keyword, slate_limit):
                products.setdefault(product.product_id, product)
        slate = sort_slate((p, FALLBACK_SLATE_SCORE) for p in products.values())
        theme = Theme(
            title=entry.title,
            persona="fallback shopper",
            product_concepts=(normalize_text(entry.title),),
            rank_hint=rank,
        )
        placements.append(
            Placement(
                theme=theme,
                keywords=entry.keywords,
                slate=slate[:slate_limit],
                retrieved_count=len(products),
            )
        )
    return Storefront(
        user_id=ctx.user_id,
        placements=tuple(placements),
        provenance=Provenance.FALLBACK,
        context_hash=context_hash(ctx, policy),
        config_version=config_version or policy.config_version,
    )


def select_candidates(
    theme: Theme,
    corpus: KeywordCorpus,
    provider: EmbeddingProvider,
    k_per_concept: int,
    cap: int,
) -> CandidateSet:
    """Restrict the corpus to a per-theme candidate set via embedding kNN.

    Each product concept contributes its top k_per_concept neighbors; the
    union is deduplicated keeping the maximum similarity per keyword, sorted
    by (similarity desc, keyword_id asc), and truncated to ``cap``.
    """
    if k_per_concept < 1 or cap < 1:
        raise ValueError("k_per_concept and cap must be >= 1")
    best: dict[str, float] = {}
    for concept in theme.product_concepts:
        for neighbor in knn(corpus, embed(concept, provider), k_per_concept):
            prev = best.get(neighbor.keyword_id)
            if prev is None or neighbor.similarity > prev:
                best[neighbor.keyword_id] = neighbor.similarity
    ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    return CandidateSet(
        theme_ref=theme.rank_hint,
        candidates=tuple(corpus.by_id[kid] for kid, _ in ranked),
        source_similarities=tuple(sim for _, sim in ranked),
    )


def generate_keywords_with_stats(
    theme: Theme,
    candidates: CandidateSet,
    gen: KeywordGenerator,
    max_keywords: int,
) -> tuple[list[Keyword], int]:
    """Generate keywords and report how many emissions broke the constraint.

    Returns (keywords, dropped_out_of_set). Membership in the candidate set
    is enforced post-hoc regardless of generator behavior; duplicates are
    collapsed keeping first occurrence and output is truncated to
    ``max_keywords``. Raises GenerationFailed if nothing survives.
    """
    if len(candidates) == 0:
        raise GenerationFailed("empty candidate set")
    if max_keywords < 1:
        raise ValueError("max_keywords must be >= 1")
    try:
        emitted = list(gen.generate(theme, candidates, max_keywords))
    except GeneratorError as exc:
        raise GenerationFailed(f"keyword generator failed: {exc}") from exc
    by_id = {c.keyword_id: c for c in candidates.candidates}
    kept: list[Keyword] = []
    seen: set[str] = set()
    dropped = 0
    for kid in emitted:
        kid = str(kid)
        if kid not in by_id:
            dropped += 1
            continue
        if kid in seen:
            continue
        seen.add(kid)
        kept.append(by_id[kid])
        if len(kept) == max_keywords:
            break
    if dropped:
        logger.info(
            "keyword generator %s emitted %d out-of-candidate ids for theme %r",
            gen.generator_id,
            dropped,
            theme.title,
        )
    if not kept:
        raise GenerationFailed("no generated keyword is in the candidate set")
    return kept, dropped


def generate_keywords(
    theme: Theme, candidates: CandidateSet, gen: KeywordGenerator, max_keywords: int
) -> list[Keyword]:
    keywords, _ = generate_keywords_with_stats(theme, candidates, gen, max_keywords)
    return keywords


def _digest_pick(seed: int, label: str, modulus: int) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % modulus


class StubThemeGenerator:
    """Deterministic theme generator driven by purchase categories.

    Titles follow "<adjective> <category> picks" where the category comes
    from the user's most-purchased categories (quantity-weighted, ties by
    name) padded with catalog-wide generic categories, and the adjective is
    a seeded digest pick. Output is a pure function of (seed, ctx, m).
    """

    def __init__(
        self,
        seed: int,
        category_of: Callable[[str], str | None] | Mapping[str, str],
        generic_categories: Sequence[str] = GENERIC_CATEGORIES,
        adjectives: Sequence[str] = STUB_ADJECTIVES,
    ) -> None:
        self.generator_id = f"stub-themes-seed{seed}"
        self._seed = seed
        if callable(category_of):
            self._category_of = category_of
        else:
            self._category_of = category_of.get
        self._generic = tuple(dict.fromkeys(generic_categories))
        self._adjectives = tuple(adjectives)
        if not self._adjectives:
            raise ValueError("adjective pool must be non-empty")

    def _top_categories(self, ctx: UserContext) -> list[str]:
        weights: Counter[str] = Counter()
        for product_id, _, qty in ctx.purchase_history:
            category = self._category_of(product_id)
            if category:
                weights[normalize_text(category)] += max(1, qty)
        return [c for c, _ in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))]

    def generate(self, request: ThemeGenerationRequest) -> RawGeneration:
        ctx = request.ctx
        categories = self._top_categories(ctx)
        for generic in self._generic:
            if generic not in categories:
                categories.append(generic)
        if len(categories) < request.m:
            raise GeneratorError(
                f"only {len(categories)} categories available for m={request.m}"
            )
        persona_tag = ctx.preferences[0] if ctx.preferences else "everyday"
        items = []
        for slot in range(request.m):
            category = categories[slot]
            adjective = self._adjectives[
                _digest_pick(self._seed, f"{ctx.user_id}:{slot}", len(self._adjectives))
            ]
            items.append(
                {
                    "title": f"{adjective} {category} picks",
                    "persona": f"{persona_tag} {category} shopper",
                    "product_concepts": [f"{adjective} {category}", category],
                }
            )
        return RawGeneration(payload=json.dumps(items), generator_id=self.generator_id)


class StubKeywordGenerator:
    """Picks the top max_keywords candidates by similarity. Deterministic."""

    generator_id = "stub-keywords"

    def generate(
        self, theme: Theme, candidates: CandidateSet, max_keywords: int
    ) -> list[str]:
        # Candidates arrive sorted by (similarity desc, keyword_id asc).
        return [c.keyword_id for c in candidates.candidates[:max_keywords]]


class FailingThemeGenerator:
    """Fault-injection stub: every call fails. Drives fallback paths."""

    generator_id = "failing-themes"

    def __init__(self, message: str = "injected failure") -> None:
        self._message = message

    def generate(self, request: ThemeGenerationRequest) -> RawGeneration:
        raise GeneratorError(self._message)


class ScriptedThemeGenerator:
    """Replays canned payloads in order; repeats the last one when exhausted."""

    def __init__(self, payloads: Sequence[str], generator_id: str = "scripted-themes") -> None:
        if not payloads:
            raise ValueError("need at least one payload")
        self.generator_id = generator_id
        self._payloads = list(payloads)
        self.calls = 0

    def generate(self, request: ThemeGenerationRequest) -> RawGeneration:
        payload = self._payloads[min(self.calls, len(self._payloads) - 1)]
        self.calls += 1
        return RawGeneration(payload=payload, generator_id=self.generator_id)


class ScriptedKeywordGenerator:
    """Emits a fixed id list regardless of candidates; for constraint tests."""

    def __init__(self, keyword_ids: Sequence[str], generator_id: str = "scripted-keywords") -> None:
        self.generator_id = generator_id
        self._keyword_ids = list(keyword_ids)

    def generate(
        self, theme: Theme, candidates: CandidateSet, max_keywords: int
    ) -> list[str]:
        return list(self._keyword_ids)
