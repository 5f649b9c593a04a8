"""Relevance judges for offline evaluation, one per content level.

Judges decide binary relevance at the product, keyword, and page levels.
The contract is determinism per input pair: the same (theme, product) or
(user, keyword) always gets the same verdict, so evaluation reports are
reproducible. Model-backed judges must be wrapped with a verdict cache
(CachingProductJudge / CachingKeywordJudge) to satisfy that contract.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, runtime_checkable

from .filtering import LexicalOverlapScorer
from .model import Keyword, Product, Storefront, Theme, UserContext, normalize_text, tokenize


@dataclass(frozen=True)
class JudgeVerdict:
    relevant: bool
    rationale: str | None = None


@runtime_checkable
class ProductJudge(Protocol):
    """Product level: is this product relevant to the placement theme?"""

    judge_id: str

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict: ...


@runtime_checkable
class KeywordJudge(Protocol):
    """Keyword level: is this keyword relevant to the user profile?"""

    judge_id: str

    def judge(self, ctx: UserContext, keyword: Keyword) -> JudgeVerdict: ...


@runtime_checkable
class PageJudge(Protocol):
    """Page level: is the assembled storefront coherent as a whole?"""

    judge_id: str

    def judge(self, storefront: Storefront) -> JudgeVerdict: ...


def _seeded_hit(seed: int, label: str, rate: float) -> bool:
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64 < rate


class SeededProductJudge:
    """Hash-based verdicts at a fixed relevant rate. Deterministic, varied."""

    def __init__(self, seed: int = 0, relevant_rate: float = 0.85) -> None:
        if not (0.0 <= relevant_rate <= 1.0):
            raise ValueError("relevant_rate must be in [0, 1]")
        self.judge_id = f"seeded-product-{seed}"
        self._seed = seed
        self._rate = relevant_rate

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict:
        hit = _seeded_hit(
            self._seed, f"pt:{normalize_text(theme.title)}:{product.product_id}", self._rate
        )
        return JudgeVerdict(relevant=hit)


class LexicalProductJudge:
    """Relevant iff the lexical-overlap score clears a threshold."""

    def __init__(self, min_overlap: float = 0.5) -> None:
        self.judge_id = f"lexical-product-{min_overlap}"
        self._min_overlap = min_overlap
        self._scorer = LexicalOverlapScorer()

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict:
        score = self._scorer.score(theme, product)
        return JudgeVerdict(relevant=score >= self._min_overlap, rationale=f"overlap={score:.3f}")


class SeededKeywordJudge:
    def __init__(self, seed: int = 0, relevant_rate: float = 0.9) -> None:
        if not (0.0 <= relevant_rate <= 1.0):
            raise ValueError("relevant_rate must be in [0, 1]")
        self.judge_id = f"seeded-keyword-{seed}"
        self._seed = seed
        self._rate = relevant_rate

    def judge(self, ctx: UserContext, keyword: Keyword) -> JudgeVerdict:
        hit = _seeded_hit(self._seed, f"ku:{ctx.user_id}:{keyword.keyword_id}", self._rate)
        return JudgeVerdict(relevant=hit)


class LexicalKeywordJudge:
    """Relevant iff the keyword shares a token with the user profile.

    The profile is the user's preference tags plus the categories of
    purchased products, resolved through a product -> category mapping.
    """

    judge_id = "lexical-keyword"

    def __init__(self, category_of: Callable[[str], str | None] | Mapping[str, str]) -> None:
        self._category_of = category_of if callable(category_of) else category_of.get

    def _profile_tokens(self, ctx: UserContext) -> frozenset[str]:
        tokens: set[str] = set()
        for pref in ctx.preferences:
            tokens.update(tokenize(pref))
        for product_id, _, _ in ctx.purchase_history:
            category = self._category_of(product_id)
            if category:
                tokens.update(tokenize(category))
        return frozenset(tokens)

    def judge(self, ctx: UserContext, keyword: Keyword) -> JudgeVerdict:
        overlap = self._profile_tokens(ctx) & frozenset(keyword.surface.split())
        return JudgeVerdict(relevant=bool(overlap))


class ConstantProductJudge:
    def __init__(self, relevant: bool) -> None:
        self.judge_id = f"constant-product-{relevant}"
        self._relevant = relevant

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict:
        return JudgeVerdict(relevant=self._relevant)


class ConstantKeywordJudge:
    def __init__(self, relevant: bool) -> None:
        self.judge_id = f"constant-keyword-{relevant}"
        self._relevant = relevant

    def judge(self, ctx: UserContext, keyword: Keyword) -> JudgeVerdict:
        return JudgeVerdict(relevant=self._relevant)


class ScriptedProductJudge:
    """Verdicts looked up by product_id; unlisted products get `default`."""

    judge_id = "scripted-product"

    def __init__(self, verdicts: Mapping[str, bool], default: bool = False) -> None:
        self._verdicts = dict(verdicts)
        self._default = default

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict:
        return JudgeVerdict(relevant=self._verdicts.get(product.product_id, self._default))


class DistinctTitlesPageJudge:
    """Page-level stub: coherent iff no placement titles collide."""

    judge_id = "distinct-titles-page"

    def judge(self, storefront: Storefront) -> JudgeVerdict:
        titles = [normalize_text(p.theme.title) for p in storefront.placements]
        distinct = len(set(titles)) == len(titles)
        return JudgeVerdict(relevant=distinct)


class CachingProductJudge:
    """Memoizes an inner judge by (normalized title, product_id).

    Wrap any non-deterministic (e.g. remote model) judge with this to meet
    the determinism contract within a run.
    """

    def __init__(self, inner: ProductJudge) -> None:
        self.judge_id = f"cached:{inner.judge_id}"
        self._inner = inner
        self._memo: dict[tuple[str, str], JudgeVerdict] = {}

    def judge(self, theme: Theme, product: Product) -> JudgeVerdict:
        key = (normalize_text(theme.title), product.product_id)
        verdict = self._memo.get(key)
        if verdict is None:
            verdict = self._inner.judge(theme, product)
            self._memo[key] = verdict
        return verdict


class CachingKeywordJudge:
    def __init__(self, inner: KeywordJudge) -> None:
        self.judge_id = f"cached:{inner.judge_id}"
        self._inner = inner
        self._memo: dict[tuple[str, str], JudgeVerdict] = {}

    def judge(self, ctx: UserContext, keyword: Keyword) -> JudgeVerdict:
        key = (ctx.user_id, keyword.keyword_id)
        verdict = self._memo.get(key)
        if verdict is None:
            verdict = self._inner.judge(ctx, keyword)
            self._memo[key] = verdict
        return verdict
