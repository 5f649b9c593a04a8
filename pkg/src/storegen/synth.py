"""Seeded synthetic corpus, catalog, users, and fallback plan.

Real keyword and catalog data is proprietary, so desk-scale experiments run
on this generator instead. The vocabulary is deliberately aligned with the
stub generators: keyword surfaces combine a modifier from the stub
adjective pool with a category token, and product names embed their source
keyword surface, so lexical scorers and hashed embeddings produce
meaningful retrieval and pruning behavior. Coverage (products per keyword)
is controllable; drive it low to exercise carousel collapse.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any

from .generation import STUB_ADJECTIVES

CATEGORIES: tuple[str, ...] = (
    "snacks", "produce", "bakery", "dairy", "beverages", "frozen",
    "pantry", "household", "coffee", "tea", "pasta", "seafood",
    "cheese", "cereal", "spices", "soups", "juice", "candy",
    "grains", "sauces", "deli", "breakfast", "desserts", "baking",
)

NOUNS: tuple[str, ...] = (
    "assortment", "bundle", "box", "pack", "jar", "basket", "case",
    "sampler", "crate", "tin", "bag", "tray", "carton", "set",
)

FILLER_TOKENS: tuple[str, ...] = tuple(
    f"{prefix}{suffix}"
    for prefix in (
        "ald", "bren", "cor", "dal", "elm", "fen", "gor", "hal", "ist", "jor",
        "kel", "lun", "mor", "nev", "ost", "pel", "qua", "rin", "sol", "tam",
        "ulv", "ver", "wex", "yor", "zan",
    )
    for suffix in ("a", "er", "ia", "on", "us")
)

PREFERENCE_TAGS: tuple[str, ...] = (
    "vegan", "family", "budget", "organic", "gluten-free", "low-sugar", "bulk",
)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 7
    n_keywords: int = 10_000
    n_users: int = 100
    products_per_keyword: int = 8
    availability_rate: float = 0.9
    filler_product_rate: float = 0.3

    def __post_init__(self) -> None:
        minimum = len(CATEGORIES) * (len(STUB_ADJECTIVES) + 1)
        if self.n_keywords < minimum:
            raise ValueError(f"n_keywords must be >= {minimum}")
        if self.products_per_keyword < 1:
            raise ValueError("products_per_keyword must be >= 1")
        if not (0.0 < self.availability_rate <= 1.0):
            raise ValueError("availability_rate must be in (0, 1]")


def synth_corpus(spec: SynthSpec) -> list[dict[str, Any]]:
    """Keyword records: category solos, modifier x category pairs, filler.

    Solo and pair keywords are the retrievable core; filler keywords pad
    the corpus to size so candidate-set caps are exercised against a
    realistic haystack.
    """
    records: list[dict[str, Any]] = []
    seen: set[str] = set()

    def add(surface: str, taxonomy: list[str]) -> None:
        records.append(
            {
                "keyword_id": f"kw-{len(records):06d}",
                "surface": surface,
                "taxonomy_path": taxonomy,
            }
        )
        seen.add(surface)

    for category in CATEGORIES:
        add(category, [category])
    for category in CATEGORIES:
        for modifier in STUB_ADJECTIVES:
            add(f"{modifier} {category}", [category, modifier])

    rng = random.Random(spec.seed)
    while len(records) < spec.n_keywords:
        surface = f"{rng.choice(FILLER_TOKENS)} {rng.choice(FILLER_TOKENS)}"
        if surface in seen:
            continue
        add(surface, [surface.split()[0]])
    return records


def solo_keyword_id(category: str) -> str:
    return f"kw-{CATEGORIES.index(category):06d}"


def synth_catalog(
    spec: SynthSpec, corpus_records: list[dict[str, Any]]
) -> list[dict[str, Any]]:
    """Product records wired to corpus keywords.

    Pair keywords get `products_per_keyword` products each, also indexed
    under their category's solo keyword; filler keywords occasionally get a
    product or two. Availability is a seeded coin flip per product.
    """
    rng = random.Random(spec.seed + 1)
    products: list[dict[str, Any]] = []

    def add(name: str, category: str, keyword_ids: list[str]) -> None:
        products.append(
            {
                "product_id": f"p-{len(products):06d}",
                "name": name,
                "category_path": [category],
                "keyword_ids": keyword_ids,
                "availability": rng.random() < spec.availability_rate,
            }
        )

    for record in corpus_records:
        taxonomy = record["taxonomy_path"]
        surface = record["surface"]
        is_pair = len(taxonomy) == 2 and taxonomy[0] in CATEGORIES
        is_solo = len(taxonomy) == 1 and taxonomy[0] in CATEGORIES
        if is_solo:
            continue  # solo keywords are covered through their pair products
        if is_pair:
            category = taxonomy[0]
            for _ in range(spec.products_per_keyword):
                noun = rng.choice(NOUNS)
                add(
                    f"{surface} {noun} {len(products)}",
                    category,
                    [record["keyword_id"], solo_keyword_id(category)],
                )
        elif rng.random() < spec.filler_product_rate:
            for _ in range(rng.randint(1, 2)):
                noun = rng.choice(NOUNS)
                add(f"{surface} {noun} {len(products)}", taxonomy[0], [record["keyword_id"]])
    return products


def synth_users(spec: SynthSpec, catalog_records: list[dict[str, Any]]) -> list[dict[str, Any]]:
    """User records with category-skewed purchase histories."""
    rng = random.Random(spec.seed + 2)
    by_category: dict[str, list[str]] = {}
    for product in catalog_records:
        category = product["category_path"][0]
        if category in CATEGORIES:
            by_category.setdefault(category, []).append(product["product_id"])

    users: list[dict[str, Any]] = []
    base_ts = 1_700_000_000
    for i in range(spec.n_users):
        favorites = rng.sample(CATEGORIES, k=rng.randint(2, 4))
        history: list[list[Any]] = []
        ts = base_ts + rng.randint(0, 10_000)
        for _ in range(rng.randint(5, 30)):
            category = rng.choice(favorites)
            pool = by_category.get(category)
            if not pool:
                continue
            ts += rng.randint(60, 86_400)
            history.append([rng.choice(pool), ts, rng.randint(1, 5)])
        users.append(
            {
                "user_id": f"u-{i:05d}",
                "purchase_history": history,
                "engagement_signals": {
                    "sessions_per_week": round(rng.uniform(0.5, 14.0), 2),
                    "carousel_click_rate": round(rng.uniform(0.0, 0.6), 4),
                },
                "preferences": rng.sample(PREFERENCE_TAGS, k=rng.randint(0, 3)),
            }
        )
    return users


def synth_fallback_plan(n_entries: int = 6) -> list[dict[str, Any]]:
    """Static plan over category solo keywords; broad postings by design."""
    entries = []
    for category in CATEGORIES[:n_entries]:
        entries.append(
            {
                "title": f"{category} essentials",
                "keyword_ids": [solo_keyword_id(category)],
            }
        )
    return entries
